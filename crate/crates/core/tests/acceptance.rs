//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::{BTreeMap, BTreeSet};
use std::process::ExitCode;
use std::thread;
use std::time::{Duration, Instant};

use fwup_core::agent::Strategy;
use fwup_core::harness::{overhead_report, OverheadModel};
use fwup_core::naming::{BaseName, FirmwareName};
use fwup_core::ndn::{
    Auth, ContentStore, Data, DataAction, FaceId, Fib, Forwarder, ForwarderConfig, Interest,
    InterestAction, NoApp,
};
use fwup_core::sim::{
    run, sever_uplink, AttackMode, AttackerSpec, ClassMode, MetricEvent, RunOutput, Scenario,
    Simulation, LONG_PATH,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEEDS: u64 = 10;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

/// Run `f` for every seed on its own thread; results come back in seed order.
fn per_seed<T: Send>(f: impl Fn(u64) -> T + Sync) -> Vec<T> {
    thread::scope(|s| {
        let handles: Vec<_> = (0..SEEDS)
            .map(|seed| {
                s.spawn({
                    let f = &f;
                    move || f(seed)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("seed worker"))
            .collect()
    })
}

fn preset_run(strategy: Strategy, seed: u64, classes: ClassMode) -> RunOutput {
    let mut sc = Scenario::new(strategy);
    sc.seed = seed;
    sc.device_classes = classes;
    run(&sc).expect("preset scenario runs")
}

fn done_at(o: &RunOutput, node: &str) -> u64 {
    o.summary
        .completion_us
        .get(node)
        .copied()
        .unwrap_or(u64::MAX)
}

fn count(o: &RunOutput, node: &str, event: MetricEvent) -> usize {
    o.records
        .iter()
        .filter(|r| r.node == node && r.event == event)
        .count()
}

fn criterion_1() -> Verdict {
    let t = Instant::now();
    let plain = OverheadModel::ieee802154_eddsa();
    let packed = OverheadModel {
        compressed: true,
        ..plain
    };
    let small = overhead_report(&plain, 36 * 1024).unwrap();
    let large = overhead_report(&plain, 144 * 1024).unwrap();
    let ok = plain.payload_capacity() == Some(9)
        && packed.payload_capacity() == Some(35)
        && small.signature_overhead_bytes == 262_144
        && large.signature_overhead_bytes == 1_048_576;
    let el = t.elapsed();
    verdict(
        ok && el < Duration::from_secs(1),
        format!(
            "capacities {:?}/{:?}, overheads {} and {} bytes, {el:?}",
            plain.payload_capacity(),
            packed.payload_capacity(),
            small.signature_overhead_bytes,
            large.signature_overhead_bytes
        ),
    )
}

fn criterion_2() -> Verdict {
    let t = Instant::now();
    let line = r#"{"strategy":"concurrent","topology":{"nodes":[
        {"id":"gw"},{"id":"x1","parent":"gw"},{"id":"x2","parent":"x1"},{"id":"x3","parent":"x2"}]}}"#;
    let mut rng = ChaCha8Rng::seed_from_u64(0x1e2e);
    let trials: Vec<(u64, u32, Vec<u8>)> = (0..200u64)
        .map(|trial| {
            let size = rng.gen_range(1..=8192usize);
            let chunk = [8u32, 16, 32, 64][rng.gen_range(0..4)];
            let img: Vec<u8> = (0..size).map(|_| rng.gen()).collect();
            (trial, chunk, img)
        })
        .collect();
    let failures: Vec<u64> = thread::scope(|s| {
        let handles: Vec<_> = trials
            .chunks(25)
            .map(|batch| {
                s.spawn(move || {
                    let mut bad = Vec::new();
                    for (trial, chunk, img) in batch {
                        let mut sc = Scenario::from_json(line).unwrap();
                        sc.seed = *trial;
                        sc.chunk_size = *chunk;
                        sc.image = Some(img.clone());
                        let mut sim = Simulation::new(&sc).unwrap();
                        sim.run();
                        if sim.agent("x3").unwrap().installed().bytes != *img {
                            bad.push(*trial);
                        }
                    }
                    bad
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().unwrap())
            .collect()
    });
    let el = t.elapsed();
    verdict(
        failures.is_empty() && el < Duration::from_secs(60),
        format!(
            "{}/200 images identical after a lossy 3-hop path, failed trials {failures:?}, {el:?}",
            200 - failures.len()
        ),
    )
}

struct PresetRuns {
    concurrent: RunOutput,
    cascading: RunOutput,
    unique: RunOutput,
}

fn criterion_3(runs: &[PresetRuns], elapsed: Duration) -> Verdict {
    let mut a = 0;
    let mut order = 0;
    let mut shorter = [0usize; 7];
    let mut c = 0;
    for r in runs {
        let (co, ca) = (&r.concurrent, &r.cascading);
        let first_two = done_at(co, "n1").max(done_at(co, "n2"));
        let rest = LONG_PATH[2..].iter().map(|n| done_at(co, n)).min().unwrap();
        if first_two < rest {
            a += 1;
        }
        if LONG_PATH
            .windows(2)
            .all(|w| done_at(ca, w[0]) < done_at(ca, w[1]))
        {
            order += 1;
        }
        for (i, n) in LONG_PATH.iter().enumerate() {
            let k = ca
                .summary
                .fetch_duration_us
                .get(*n)
                .copied()
                .unwrap_or(u64::MAX);
            let cc = co.summary.fetch_duration_us.get(*n).copied().unwrap_or(0);
            if k < cc {
                shorter[i] += 1;
            }
        }
        let path_co = LONG_PATH.iter().map(|n| done_at(co, n)).max().unwrap();
        let path_ca = LONG_PATH.iter().map(|n| done_at(ca, n)).max().unwrap();
        if path_co < path_ca {
            c += 1;
        }
    }
    let b2 = shorter.iter().all(|&s| s >= 8);
    verdict(
        a >= 8 && order == 10 && b2 && c >= 8 && elapsed < Duration::from_secs(600),
        format!(
            "(a) n1,n2 first {a}/10; (b) rank order {order}/10, shorter fetch per node n1..n7 {shorter:?}/10; (c) concurrent first {c}/10; suite {elapsed:?}"
        ),
    )
}

fn criterion_4(runs: &[PresetRuns]) -> Verdict {
    let mut net = 0;
    let mut app = 0;
    let mut pairs = Vec::new();
    let mut app_counts = Vec::new();
    for r in runs {
        let (nc, nk) = (
            count(&r.concurrent, "n7", MetricEvent::NetRetx),
            count(&r.cascading, "n7", MetricEvent::NetRetx),
        );
        pairs.push((nc, nk));
        if nk < nc {
            net += 1;
        }
        let retx: Vec<_> = r
            .cascading
            .records
            .iter()
            .filter(|x| x.node == "n7" && x.event == MetricEvent::AppRetx)
            .collect();
        let on_zero = retx.iter().filter(|x| x.chunk_id == Some(0)).count();
        app_counts.push(format!("{on_zero}/{}", retx.len()));
        if !retx.is_empty() && on_zero * 10 >= retx.len() * 9 {
            app += 1;
        }
    }
    verdict(
        net >= 8 && app >= 8,
        format!("n7 net retx lower under cascading {net}/10 (concurrent, cascading) {pairs:?}; app retx on chunk 0 >= 90% in {app}/10 ({})", app_counts.join(" ")),
    )
}

fn criterion_5() -> Verdict {
    let results = per_seed(|seed| {
        let mut ok = true;
        let mut notes = Vec::new();
        for rate in [1.0, 0.05] {
            let mut sc = Scenario::new(Strategy::Concurrent);
            sc.seed = seed;
            sc.chunks = Some(200);
            sc.attacker = Some(AttackerSpec {
                edge: ["n6".into(), "n7".into()],
                mode: AttackMode::TamperPayload,
                rate,
            });
            let mut sim = Simulation::new(&sc).unwrap();
            sim.run();
            let installed_ok =
                sim.agent("n7").unwrap().installed().bytes == sim.vendor_image("n7").unwrap();
            let out = sim.into_output();
            let fails: Vec<Option<u32>> = out
                .records
                .iter()
                .filter(|r| r.node == "n7" && r.event == MetricEvent::TagFail)
                .map(|r| r.chunk_id)
                .collect();
            let abort = out
                .records
                .iter()
                .find(|r| r.node == "n7" && r.event == MetricEvent::Abort)
                .map(|r| r.sim_time_us);
            if rate == 1.0 {
                let single_index = fails.len() == 3 && fails.iter().all(|f| *f == fails[0]);
                let after = abort.map(|t| {
                    out.records
                        .iter()
                        .filter(|r| {
                            r.node == "n7"
                                && r.sim_time_us >= t
                                && r.chunk_id.is_some()
                                && matches!(
                                    r.event,
                                    MetricEvent::InterestSent
                                        | MetricEvent::NetRetx
                                        | MetricEvent::AppRetx
                                )
                        })
                        .count()
                });
                ok &= single_index && after == Some(0);
                notes.push(format!(
                    "tag failures {fails:?}, chunk Interests after abort {after:?}"
                ));
            } else {
                ok &= installed_ok && abort.is_none();
                notes.push(format!(
                    "{} tampered chunks rejected, image identical {installed_ok}",
                    fails.len()
                ));
            }
        }
        (ok, notes.join("; "))
    });
    let passed = results.iter().filter(|r| r.0).count();
    let first_bad = results.iter().position(|r| !r.0);
    verdict(
        passed == 10,
        format!(
            "{passed}/10 seeds; seed 0: {}{}",
            results[0].1,
            first_bad
                .map(|s| format!("; seed {s}: {}", results[s].1))
                .unwrap_or_default()
        ),
    )
}

fn criterion_6() -> Verdict {
    let results = per_seed(|seed| {
        let mut sc = Scenario::new(Strategy::Cascading);
        sc.seed = seed;
        let reference = run(&sc).unwrap();
        let n1 = reference.summary.completion_us["n1"];
        let severed = run(&sever_uplink(&sc, ["gw", "n1"], n1 + 1).unwrap()).unwrap();
        // Under cascading n2..n7 can only start after n1 installed, so every
        // chunk they store crossed n1 after the uplink went down.
        LONG_PATH[1..].iter().all(|n| {
            severed
                .summary
                .completion_us
                .get(*n)
                .is_some_and(|t| *t > n1)
        }) && severed.summary.completion_us.get("n1") == Some(&n1)
    });
    let passed = results.iter().filter(|ok| **ok).count();
    verdict(
        passed == 10,
        format!("n2..n7 installed after the gateway uplink was cut in {passed}/10 seeds"),
    )
}

fn criterion_7(runs: &[PresetRuns]) -> Verdict {
    let mut ok = 0;
    let mut ratios = Vec::new();
    for r in runs {
        let total = |o: &RunOutput| {
            (o.summary.completed == o.summary.updating)
                .then(|| o.summary.completion_us.values().copied().max().unwrap_or(0))
        };
        let shared = total(&r.concurrent).unwrap_or(u64::MAX);
        let unique = total(&r.unique).unwrap_or(u64::MAX);
        let ratio = unique as f64 / shared as f64;
        ratios.push(format!("{ratio:.1}"));
        if ratio >= 2.0 {
            ok += 1;
        }
    }
    verdict(
        ok >= 8,
        format!(
            "unique/shared completion ratio >= 2 in {ok}/10 seeds: {}",
            ratios.join(" ")
        ),
    )
}

fn criterion_8() -> Verdict {
    let mut cases = Vec::new();
    for (strategy, seed) in [(Strategy::Concurrent, 3), (Strategy::Cascading, 11)] {
        let mut sc = Scenario::new(strategy);
        sc.seed = seed;
        sc.chunks = Some(60);
        sc.attacker = Some(AttackerSpec {
            edge: ["n3".into(), "n4".into()],
            mode: AttackMode::ForgeTag,
            rate: 0.1,
        });
        cases.push(sc);
    }
    let identical = cases.iter().all(|sc| {
        let a = fwup_core::sim::to_csv_string(&run(sc).unwrap().records);
        let b = fwup_core::sim::to_csv_string(&run(sc).unwrap().records);
        a == b && a.len() > 100
    });
    verdict(
        identical,
        "repeated runs with equal seeds produced byte-identical CSV",
    )
}

fn base() -> BaseName {
    BaseName::new("d", "v", "c", 1).unwrap()
}

fn data(name: &FirmwareName) -> Data {
    Data {
        name: name.clone(),
        payload: vec![1, 2, 3],
        auth: Auth::None,
        freshness_ms: 0,
    }
}

/// Every Interest sequence of length <= 4 over two names and three
/// downstream faces, checked against a naive list-scan model.
fn pit_aggregation_exhaustive() -> Result<usize, String> {
    let names = [base().chunk(0), base().chunk(1)];
    let upstream = FaceId(0);
    let mut cases = 0;
    for len in 1..=4u32 {
        for code in 0..6u32.pow(len) {
            let seq: Vec<(usize, FaceId)> = (0..len)
                .map(|i| {
                    let c = code / 6u32.pow(i) % 6;
                    ((c / 3) as usize, FaceId(1 + c % 3))
                })
                .collect();
            let mut fwd = Forwarder::new(ForwarderConfig::default(), Fib::with_default(upstream));
            let mut forwarded = Vec::new();
            for (k, (n, face)) in seq.iter().enumerate() {
                let i = Interest::new(names[*n].clone(), k as u32 + 1);
                match fwd.on_interest(*face, &i, 0, &mut NoApp) {
                    InterestAction::Forward(up, _) => {
                        assert_eq!(up, upstream);
                        forwarded.push(*n);
                    }
                    InterestAction::Aggregate => {}
                    other => return Err(format!("{seq:?}: unexpected {other:?}")),
                }
            }
            // Reference: each name goes upstream once; Data fans out to the
            // distinct faces that asked for it.
            let mut expect_fwd: Vec<usize> = Vec::new();
            for (n, _) in &seq {
                if !expect_fwd.contains(n) {
                    expect_fwd.push(*n);
                }
            }
            if forwarded != expect_fwd {
                return Err(format!(
                    "{seq:?}: forwarded {forwarded:?}, expected {expect_fwd:?}"
                ));
            }
            for (n, name) in names.iter().enumerate() {
                let want: BTreeSet<FaceId> = seq
                    .iter()
                    .filter(|(m, _)| *m == n)
                    .map(|(_, f)| *f)
                    .collect();
                let acts = fwd.on_data(upstream, &data(name), 1, &mut NoApp);
                let got: BTreeSet<FaceId> = acts
                    .iter()
                    .filter_map(|a| match a {
                        DataAction::ForwardDownstream(f) => Some(f.clone()),
                        _ => None,
                    })
                    .flatten()
                    .collect();
                if got != want {
                    return Err(format!(
                        "{seq:?}: name {n} delivered to {got:?}, expected {want:?}"
                    ));
                }
            }
            if !fwd.pit.is_empty() {
                return Err(format!("{seq:?}: PIT not drained"));
            }
            cases += 1;
        }
    }
    Ok(cases)
}

/// Tick every millisecond and compare resend and expiry instants with the
/// table of expected offsets for several staggered creation times.
fn retx_timing_exhaustive() -> Result<usize, String> {
    let mut checked = 0;
    for start_ms in [0u64, 1, 999, 1_500, 2_000, 7_777] {
        for entries in 1..=3u32 {
            let mut fwd = Forwarder::new(ForwarderConfig::default(), Fib::with_default(FaceId(0)));
            let mut created = BTreeMap::new();
            for e in 0..entries {
                let t = (start_ms + e as u64 * 700) * 1_000;
                let name = base().chunk(e);
                fwd.on_interest(
                    FaceId(1),
                    &Interest::new(name.clone(), 1_000 + e),
                    t,
                    &mut NoApp,
                );
                created.insert(name, t);
            }
            let mut resends: BTreeMap<FirmwareName, Vec<u64>> = BTreeMap::new();
            let mut expiries: BTreeMap<FirmwareName, u64> = BTreeMap::new();
            let mut nonce = 0u32;
            for ms in start_ms..start_ms + 12_000 {
                let now = ms * 1_000;
                let out = fwd.tick_retransmissions(now, || {
                    nonce += 1;
                    nonce
                });
                for (_, i) in out.resend {
                    resends.entry(i.name).or_default().push(now);
                }
                for e in out.expired {
                    expiries.insert(e.name, now);
                }
            }
            for (name, t0) in &created {
                let want: Vec<u64> = (1..=3).map(|k| t0 + k * 2_000_000).collect();
                let got = resends.get(name).cloned().unwrap_or_default();
                if got != want {
                    return Err(format!(
                        "start {start_ms} ms: resends {got:?}, expected {want:?}"
                    ));
                }
                if expiries.get(name) != Some(&(t0 + 8_000_000)) {
                    return Err(format!(
                        "start {start_ms} ms: expiry {:?}",
                        expiries.get(name)
                    ));
                }
                checked += 1;
            }
        }
    }
    Ok(checked)
}

/// Reference LRU: a vector ordered from least to most recently used.
struct RefLru {
    cap: usize,
    order: Vec<u32>,
}

impl RefLru {
    fn insert(&mut self, k: u32) -> Option<u32> {
        if let Some(p) = self.order.iter().position(|x| *x == k) {
            self.order.remove(p);
            self.order.push(k);
            return None;
        }
        let evicted = (self.order.len() >= self.cap).then(|| self.order.remove(0));
        self.order.push(k);
        evicted
    }

    fn lookup(&mut self, k: u32) -> bool {
        match self.order.iter().position(|x| *x == k) {
            Some(p) => {
                self.order.remove(p);
                self.order.push(k);
                true
            }
            None => false,
        }
    }
}

fn compare_lru(cap: usize, ops: &[(bool, u32)]) -> Result<(), String> {
    let mut cs = ContentStore::new(cap);
    let mut reference = RefLru {
        cap,
        order: Vec::new(),
    };
    for (t, (insert, k)) in ops.iter().enumerate() {
        let name = base().chunk(*k);
        if *insert {
            let got = cs
                .insert(&data(&name), t as u64)
                .and_then(|n| n.chunk_index());
            let want = reference.insert(*k);
            if got != want {
                return Err(format!(
                    "cap {cap}, op {t}: evicted {got:?}, expected {want:?}"
                ));
            }
        } else if cs.lookup(&name, t as u64).is_some() != reference.lookup(*k) {
            return Err(format!("cap {cap}, op {t}: hit mismatch on {k}"));
        }
    }
    let order: Vec<u32> = cs
        .lru_order()
        .iter()
        .filter_map(|n| n.chunk_index())
        .collect();
    if order != reference.order {
        return Err(format!(
            "cap {cap}: order {order:?}, expected {:?}",
            reference.order
        ));
    }
    Ok(())
}

fn lru_exhaustive() -> Result<usize, String> {
    let mut cases = 0;
    // Capacity 3, five names, every insert/lookup sequence of length 6.
    for code in 0..10u32.pow(6) {
        let ops: Vec<(bool, u32)> = (0..6)
            .map(|i| {
                let c = code / 10u32.pow(i) % 10;
                (c < 5, c % 5)
            })
            .collect();
        compare_lru(3, &ops)?;
        cases += 1;
    }
    // Full capacity 64 over a 96-name universe.
    let mut rng = ChaCha8Rng::seed_from_u64(64);
    for _ in 0..200 {
        let ops: Vec<(bool, u32)> = (0..600)
            .map(|_| (rng.gen_bool(0.6), rng.gen_range(0..96)))
            .collect();
        compare_lru(64, &ops)?;
        cases += 1;
    }
    Ok(cases)
}

fn criterion_9() -> Verdict {
    match (pit_aggregation_exhaustive(), retx_timing_exhaustive(), lru_exhaustive()) {
        (Ok(p), Ok(r), Ok(l)) => verdict(
            true,
            format!("PIT aggregation {p} sequences, retx timing {r} entries (3 resends at 2000 ms, expiry at 8000 ms), LRU {l} sequences"),
        ),
        (p, r, l) => verdict(
            false,
            [p.err(), r.err(), l.err()].into_iter().flatten().collect::<Vec<_>>().join("; "),
        ),
    }
}

fn main() -> ExitCode {
    if std::env::args().any(|a| a == "--list") {
        // Test listing by cargo or IDEs: expose a single pseudo-test.
        println!("acceptance: test");
        return ExitCode::SUCCESS;
    }
    let mut verdicts: Vec<(u8, Verdict)> = vec![(1, criterion_1()), (2, criterion_2())];

    let t = Instant::now();
    let runs = per_seed(|seed| PresetRuns {
        concurrent: preset_run(Strategy::Concurrent, seed, ClassMode::Shared),
        cascading: preset_run(Strategy::Cascading, seed, ClassMode::Shared),
        unique: preset_run(Strategy::Concurrent, seed, ClassMode::Unique),
    });
    let preset_elapsed = t.elapsed();
    verdicts.push((3, criterion_3(&runs, preset_elapsed)));
    verdicts.push((4, criterion_4(&runs)));
    verdicts.push((5, criterion_5()));
    verdicts.push((6, criterion_6()));
    verdicts.push((7, criterion_7(&runs)));
    verdicts.push((8, criterion_8()));
    verdicts.push((9, criterion_9()));

    let mut all = true;
    for (n, v) in &verdicts {
        all &= v.pass;
        println!(
            "{} criterion {n}: {}",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail
        );
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
