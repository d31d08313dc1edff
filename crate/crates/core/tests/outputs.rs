// SPDX-License-Identifier: Apache-2.0

use std::collections::{BTreeMap, HashMap};
use std::fs;

use cosim_core::profiler::ReportBundle;
use cosim_core::programs::Builtin;
use cosim_core::signals::ChannelClass;
use cosim_core::scenario::{run_scenario, CongestionConfig, DutConfig, ReportFormat, RunOptions, ScenarioConfig};

/// Just enough VCD parsing to recover per-signal change lists.
struct MiniVcd {
    /// Full dotted name -> id code.
    names: HashMap<String, String>,
    /// id code -> (time, value bits).
    changes: HashMap<String, Vec<(u64, String)>>,
    times: Vec<u64>,
}

fn parse_vcd(text: &str) -> MiniVcd {
    let mut scope: Vec<String> = Vec::new();
    let mut names = HashMap::new();
    let mut changes: HashMap<String, Vec<(u64, String)>> = HashMap::new();
    let mut times = Vec::new();
    let mut now = 0;
    let mut toks = text.split_whitespace().peekable();
    let mut in_defs = true;
    while let Some(t) = toks.next() {
        if in_defs {
            match t {
                "$scope" => {
                    toks.next();
                    scope.push(toks.next().unwrap().to_string());
                }
                "$upscope" => {
                    scope.pop();
                }
                "$var" => {
                    let (_kind, _width, id, name) =
                        (toks.next().unwrap(), toks.next().unwrap(), toks.next().unwrap(), toks.next().unwrap());
                    let full = scope.iter().map(String::as_str).chain([name]).collect::<Vec<_>>().join(".");
                    names.insert(full, id.to_string());
                }
                "$enddefinitions" => in_defs = false,
                _ => {}
            }
            continue;
        }
        if let Some(ts) = t.strip_prefix('#') {
            now = ts.parse().unwrap();
            times.push(now);
        } else if let Some(bits) = t.strip_prefix('b') {
            let id = toks.next().unwrap();
            changes.entry(id.to_string()).or_default().push((now, bits.to_string()));
        } else if t.starts_with('$') {
            // $dumpvars / $end markers
        } else {
            let (v, id) = t.split_at(1);
            changes.entry(id.to_string()).or_default().push((now, v.to_string()));
        }
    }
    MiniVcd { names, changes, times }
}

fn scenario() -> ScenarioConfig {
    let mut c = ScenarioConfig::new(DutConfig::SystolicSoc { rows: 4, cols: 6 }, Builtin::Matmul);
    c.firmware.params.m = 5;
    c.congestion = CongestionConfig::uniform(0.3, 0, 3);
    c.seed = 17;
    c.report.format = ReportFormat::Both;
    c.report.window_cycles = 32;
    c.report.time_bucket_cycles = 64;
    c
}

#[test]
fn vcd_matches_channel_trace() {
    let dir = tempfile::tempdir().unwrap();
    let vcd = dir.path().join("run.vcd");
    let opts = RunOptions { vcd: Some(vcd.clone()), record_trace: true, ..Default::default() };
    let run = run_scenario(&scenario(), &opts).unwrap();
    assert_eq!(run.exit_code(), 0);
    let trace = run.trace.unwrap();
    let v = parse_vcd(&fs::read_to_string(&vcd).unwrap());
    assert_eq!(*v.times.last().unwrap(), trace.cycles.len() as u64 - 1);

    let mut checked = 0;
    for (c, info) in trace.channels.iter().enumerate() {
        let prefix = match info.class {
            ChannelClass::Ar => "ar",
            ChannelClass::R => "r",
            ChannelClass::Aw => "aw",
            ChannelClass::W => "w",
            ChannelClass::B => "b",
            ChannelClass::Stream => "t",
        };
        for (field, get) in [("valid", 0usize), ("ready", 1)] {
            let id = &v.names[&format!("{}.{prefix}{field}", info.group)];
            let seq: Vec<bool> = trace.cycles.iter().map(|s| if get == 0 { s[c].valid } else { s[c].ready }).collect();
            let toggles = seq.windows(2).filter(|w| w[0] != w[1]).count();
            let recorded = &v.changes[id];
            // One initial value plus one record per toggle.
            assert_eq!(recorded.len(), toggles + 1, "{}.{prefix}{field}", info.group);
            for (t, bit) in recorded {
                assert_eq!(bit == "1", seq[*t as usize]);
            }
            checked += 1;
        }
    }
    assert!(checked >= 2 * 8);
    assert!(v.names.keys().any(|n| n.starts_with("dut.array.")));
}

#[test]
fn outputs_are_deterministic() {
    let mut files = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().unwrap();
        let opts = RunOptions {
            vcd: Some(dir.path().join("run.vcd")),
            report_dir: Some(dir.path().to_path_buf()),
            ..Default::default()
        };
        let run = run_scenario(&scenario(), &opts).unwrap();
        let mut m = BTreeMap::new();
        for f in &run.files {
            m.insert(f.file_name().unwrap().to_string_lossy().into_owned(), fs::read(f).unwrap());
        }
        files.push(m);
    }
    let names: Vec<_> = files[0].keys().cloned().collect();
    for want in ["bandwidth.csv", "stalls.csv", "heatmap.csv", "run.vcd"] {
        assert!(names.iter().any(|n| n == want), "{names:?}");
    }
    assert_eq!(files[0], files[1]);
}

#[test]
fn exports_reimport_to_same_aggregates() {
    let dir = tempfile::tempdir().unwrap();
    let opts = RunOptions { report_dir: Some(dir.path().to_path_buf()), ..Default::default() };
    let run = run_scenario(&scenario(), &opts).unwrap();
    let r = &run.report;

    let mut bw = csv::Reader::from_path(dir.path().join("bandwidth.csv")).unwrap();
    assert_eq!(bw.headers().unwrap(), vec!["window_start_cycle", "port", "bytes", "utilization"]);
    let mut per_port: BTreeMap<String, u64> = BTreeMap::new();
    let mut rows = 0;
    for rec in bw.records() {
        let rec = rec.unwrap();
        *per_port.entry(rec[1].to_string()).or_default() += rec[2].parse::<u64>().unwrap();
        let u: f64 = rec[3].parse().unwrap();
        assert!((0.0..=1.0).contains(&u));
        rows += 1;
    }
    assert_eq!(rows, r.bandwidth.ports.iter().map(|p| p.windows.len()).sum::<usize>());
    for p in &r.bandwidth.ports {
        assert_eq!(per_port[&p.port], p.windows.iter().map(|w| w.bytes).sum::<u64>());
    }

    let mut st = csv::Reader::from_path(dir.path().join("stalls.csv")).unwrap();
    let stalls: BTreeMap<String, u64> =
        st.records().map(|x| x.unwrap()).map(|x| (x[0].to_string(), x[1].parse().unwrap())).collect();
    assert_eq!(stalls, r.stalls);

    let mut hm = csv::Reader::from_path(dir.path().join("heatmap.csv")).unwrap();
    let mut total = 0;
    for rec in hm.records() {
        let rec = rec.unwrap();
        let (a, t): (u64, u64) = (rec[0].parse().unwrap(), rec[1].parse().unwrap());
        let cell = r.heatmap.cell(a, t);
        assert_eq!((cell.reads, cell.writes), (rec[2].parse().unwrap(), rec[3].parse().unwrap()));
        total += cell.reads + cell.writes;
    }
    assert_eq!(total, r.heatmap.total());

    let json = fs::read_to_string(dir.path().join("report.json")).unwrap();
    let back: ReportBundle = serde_json::from_str(&json).unwrap();
    assert_eq!(&back, r);
}
