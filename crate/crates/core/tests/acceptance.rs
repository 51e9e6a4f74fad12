//! Acceptance suite. Each test prints one `PASS`/`FAIL` line, then asserts.
//!
//! Run with `cargo test -p rebal-core --test acceptance -- --nocapture`.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::net::TcpListener;
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rebal_core::agent::{compute_targets, greedy_rollout, random_rollout, train, Dense, QNetwork, TrainConfig, Transition};
use rebal_core::ingest::DemandProfile;
use rebal_core::metrics::{imbalance, imbalance_reduction, truck_utilization};
use rebal_core::planner::{
    build_journeys, format_clock, naive_round_trip_km, schedule_journeys, DistanceProvider, Leg, LegDoc, PickupDoc,
    TruckPlan,
};
use rebal_core::report::{format_report, generate_report, ground_check, EndpointConfig, ReportSource};
use rebal_core::synth::TidalDesign;
use rebal_core::{Config, EpisodeLog, Error, Journey, JourneyPlan, RebalanceEnv, RewardConfig, Station, StationRegistry, TransferTask};

fn verdict(id: u32, name: &str, ok: bool, detail: String) {
    println!("{} [{id}] {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "criterion {id} ({name}) failed: {detail}");
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

// ---------------------------------------------------------------- 1

const EVAL_RESETS: std::ops::Range<u64> = 1000..1050;

fn reduction(log: &EpisodeLog, targets: &[u32]) -> f64 {
    let initial = imbalance(&log.initial, targets).unwrap();
    let fin = imbalance(&log.final_state, targets).unwrap();
    imbalance_reduction(initial, fin).value
}

#[test]
fn c01_dqn_beats_random_on_tidal_network() {
    let design = TidalDesign::default();
    let registry = Arc::new(design.registry().unwrap());
    let profile = Arc::new(design.profile().unwrap());
    let mut env = RebalanceEnv::new(registry.clone(), profile, RewardConfig::default(), 24).unwrap();
    let targets = registry.targets();
    let cfg = TrainConfig {
        total_timesteps: 100_000,
        ..TrainConfig::default()
    };

    // Sequential so the summed time is single-core runtime.
    let per_seed: Vec<(u64, f64, f64, f64)> = (1..=3u64)
        .map(|seed| {
            let start = Instant::now();
            let out = train(&mut env, &cfg, seed).unwrap();
            let secs = start.elapsed().as_secs_f64();
            let dqn: Vec<f64> = EVAL_RESETS
                .map(|r| reduction(&greedy_rollout(&mut env, &out.network, r).unwrap(), &targets))
                .collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let random: Vec<f64> = EVAL_RESETS
                .map(|r| reduction(&random_rollout(&mut env, r, &mut rng).unwrap(), &targets))
                .collect();
            (seed, mean(&dqn), mean(&random), secs)
        })
        .collect();

    let dqn = mean(&per_seed.iter().map(|r| r.1).collect::<Vec<_>>());
    let random = mean(&per_seed.iter().map(|r| r.2).collect::<Vec<_>>());
    let secs: f64 = per_seed.iter().map(|r| r.3).sum();
    for (seed, d, r, t) in &per_seed {
        println!("  seed {seed}: dqn {d:.2}% random {r:.2}% train {t:.1}s");
    }
    verdict(
        1,
        "dqn_imbalance_reduction",
        dqn >= 80.0 && random <= 20.0 && secs <= 900.0,
        format!("dqn {dqn:.2}% (>= 80), random {random:.2}% (<= 20), training {secs:.0}s on one core (<= 900)"),
    );
}

// ---------------------------------------------------------------- 2

#[test]
fn c02_bellman_targets_reach_value_iteration_fixed_point() {
    let gamma = 0.9;
    // P[s][a] = (to state 0, to state 1, terminate).
    let p = [[(0.6, 0.3, 0.1), (0.1, 0.8, 0.1)], [(0.5, 0.5, 0.0), (0.2, 0.2, 0.6)]];
    let r = [[1.0, 0.0], [-0.5, 2.0]];

    // Oracle: value iteration on V.
    let mut v = [0.0f64; 2];
    for _ in 0..5000 {
        let mut next = [f64::NEG_INFINITY; 2];
        for s in 0..2 {
            for a in 0..2 {
                let (p0, p1, _) = p[s][a];
                next[s] = next[s].max(r[s][a] + gamma * (p0 * v[0] + p1 * v[1]));
            }
        }
        v = next;
    }
    let q_star: Vec<[f64; 2]> = (0..2)
        .map(|s| {
            let mut row = [0.0; 2];
            for (a, q) in row.iter_mut().enumerate() {
                let (p0, p1, _) = p[s][a];
                *q = r[s][a] + gamma * (p0 * v[0] + p1 * v[1]);
            }
            row
        })
        .collect();

    // Tabular Q as a single linear layer over one-hot states.
    let one_hot = |s: usize| if s == 0 { vec![1.0, 0.0] } else { vec![0.0, 1.0] };
    let mut q = [[0.0f64; 2]; 2];
    let mut sweeps = 0;
    loop {
        let mut layer = Dense::zeros(2, 2);
        for s in 0..2 {
            for a in 0..2 {
                layer.weights[a * 2 + s] = q[s][a];
            }
        }
        let target_net = QNetwork::from_layers(vec![layer]).unwrap();
        let mut next = [[0.0f64; 2]; 2];
        for s in 0..2 {
            for a in 0..2 {
                let (p0, p1, pt) = p[s][a];
                let batch: Vec<Transition> = [(0, p0, false), (1, p1, false), (0, pt, true)]
                    .iter()
                    .map(|&(s2, _, done)| Transition {
                        state: one_hot(s),
                        action: a,
                        reward: r[s][a],
                        next_state: one_hot(s2),
                        done,
                    })
                    .collect();
                let refs: Vec<&Transition> = batch.iter().collect();
                let y = compute_targets(&refs, &target_net, gamma).unwrap();
                next[s][a] = p0 * y[0] + p1 * y[1] + pt * y[2];
            }
        }
        let delta = (0..4).map(|k| (next[k / 2][k % 2] - q[k / 2][k % 2]).abs()).fold(0.0, f64::max);
        q = next;
        sweeps += 1;
        if delta < 1e-14 || sweeps >= 10_000 {
            break;
        }
    }
    let err = (0..4).map(|k| (q[k / 2][k % 2] - q_star[k / 2][k % 2]).abs()).fold(0.0, f64::max);
    verdict(
        2,
        "bellman_fixed_point",
        err <= 1e-6,
        format!("max |Q - Q*| = {err:.2e} after {sweeps} sweeps (<= 1e-6)"),
    );
}

// ---------------------------------------------------------------- 3

#[test]
fn c03_gradient_check() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let input = rng.gen_range(2..6);
        let hidden = [rng.gen_range(2..7), rng.gen_range(2..7)];
        let output = rng.gen_range(2..5);
        let net = QNetwork::new(input, &hidden, output, &mut rng).unwrap();
        let batch = rng.gen_range(1..5);
        let states: Vec<Vec<f64>> = (0..batch).map(|_| (0..input).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let refs: Vec<&[f64]> = states.iter().map(Vec::as_slice).collect();
        let actions: Vec<usize> = (0..batch).map(|_| rng.gen_range(0..output)).collect();
        let targets: Vec<f64> = (0..batch).map(|_| rng.gen_range(-2.0..2.0)).collect();

        let (_, grads) = net.mse_gradients(&refs, &actions, &targets).unwrap();
        let analytic = grads.flat();
        let params = net.flat_params();
        let h = 1e-5;
        let mut probe = net.clone();
        for (k, &g) in analytic.iter().enumerate() {
            let mut p = params.clone();
            p[k] += h;
            probe.set_flat_params(&p).unwrap();
            let up = probe.mse(&refs, &actions, &targets).unwrap();
            p[k] -= 2.0 * h;
            probe.set_flat_params(&p).unwrap();
            let down = probe.mse(&refs, &actions, &targets).unwrap();
            let numeric = (up - down) / (2.0 * h);
            let rel = (g - numeric).abs() / g.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max(rel);
        }
    }
    verdict(3, "gradient_check", worst <= 1e-4, format!("worst relative error {worst:.2e} over 20 networks (<= 1e-4)"));
}

// ---------------------------------------------------------------- 4, 5

fn random_registry(rng: &mut ChaCha8Rng, n: usize) -> StationRegistry {
    let stations = (0..n)
        .map(|i| {
            let lat = 40.70 + rng.gen_range(0.0..0.05);
            let lon = -74.00 + rng.gen_range(0.0..0.05);
            Station::new(format!("s{i}"), format!("Dock {i}"), lat, lon, 30).unwrap()
        })
        .collect();
    StationRegistry::new(stations).unwrap()
}

fn random_tasks(rng: &mut ChaCha8Rng, n: usize) -> Vec<TransferTask> {
    (0..rng.gen_range(1..13))
        .map(|_| {
            let source = rng.gen_range(0..n);
            let dest = (source + rng.gen_range(1..n)) % n;
            TransferTask {
                source,
                dest,
                quantity: rng.gen_range(1..9),
                need_hour: rng.gen_range(0..24),
            }
        })
        .collect()
}

/// Independent per-station net: positive gives, negative receives.
fn oracle_net(tasks: &[TransferTask], n: usize) -> Vec<i64> {
    let mut net = vec![0i64; n];
    for t in tasks {
        net[t.source] += t.quantity as i64;
        net[t.dest] -= t.quantity as i64;
    }
    net
}

/// Conservation, capacity and distance consistency of a journey set.
fn journey_violations(
    journeys: &[Journey],
    tasks: &[TransferTask],
    n: usize,
    capacity: u32,
    provider: &DistanceProvider,
) -> Vec<String> {
    let net = oracle_net(tasks, n);
    let mut out = Vec::new();
    let mut picked = vec![0i64; n];
    let mut dropped = vec![0i64; n];
    for j in journeys {
        let delivered: u32 = j.legs.iter().map(|l| l.drop).sum();
        if j.load == 0 || j.load > capacity || delivered != j.load {
            out.push(format!("journey {} load {} delivered {delivered} cap {capacity}", j.truck_id, j.load));
        }
        picked[j.pickup] += j.load as i64;
        let mut at = j.pickup;
        let mut km = 0.0;
        for l in &j.legs {
            let d = provider.distance(at, l.station).unwrap();
            if (d - l.km).abs() > 1e-9 || l.drop == 0 {
                out.push(format!("journey {} leg to {} km {} expected {d}", j.truck_id, l.station, l.km));
            }
            km += d;
            dropped[l.station] += l.drop as i64;
            at = l.station;
        }
        if (km - j.total_km).abs() > 1e-9 {
            out.push(format!("journey {} total {} expected {km}", j.truck_id, j.total_km));
        }
    }
    for i in 0..n {
        if picked[i] > net[i].max(0) || dropped[i] > (-net[i]).max(0) {
            out.push(format!("station {i} picked {} dropped {} net {}", picked[i], dropped[i], net[i]));
        }
    }
    let surplus: i64 = net.iter().filter(|&&v| v > 0).sum();
    let deficit: i64 = -net.iter().filter(|&&v| v < 0).sum::<i64>();
    let moved: i64 = dropped.iter().sum();
    if moved != surplus.min(deficit) {
        out.push(format!("moved {moved}, expected {}", surplus.min(deficit)));
    }
    out
}

/// Every instance on up to four stations with per-pair quantities up to 3:
/// all assignments for n <= 3, all sets of up to three tasks for n = 4.
fn exhaustive_violations() -> (usize, Vec<String>) {
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    let mut count = 0;
    let mut bad = Vec::new();
    for n in 2..=4usize {
        let reg = random_registry(&mut rng, n);
        let provider = DistanceProvider::haversine(&reg, 1.3).unwrap();
        let pairs: Vec<(usize, usize)> =
            (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).collect();
        let mut instances: Vec<Vec<u32>> = Vec::new();
        if n <= 3 {
            for code in 0..4usize.pow(pairs.len() as u32) {
                instances.push((0..pairs.len()).map(|k| (code / 4usize.pow(k as u32) % 4) as u32).collect());
            }
        } else {
            let m = pairs.len();
            let mut push = |chosen: &[usize]| {
                for code in 0..3usize.pow(chosen.len() as u32) {
                    let mut q = vec![0u32; m];
                    for (k, &c) in chosen.iter().enumerate() {
                        q[c] = (code / 3usize.pow(k as u32) % 3) as u32 + 1;
                    }
                    instances.push(q);
                }
            };
            push(&[]);
            for a in 0..m {
                push(&[a]);
                for b in a + 1..m {
                    push(&[a, b]);
                    for c in b + 1..m {
                        push(&[a, b, c]);
                    }
                }
            }
        }
        for quantities in &instances {
            let tasks: Vec<TransferTask> = pairs
                .iter()
                .zip(quantities)
                .filter(|(_, &q)| q > 0)
                .map(|(&(source, dest), &quantity)| TransferTask {
                    source,
                    dest,
                    quantity,
                    need_hour: 8,
                })
                .collect();
            for capacity in [1, 2, 3, 5] {
                count += 1;
                let journeys = build_journeys(&tasks, capacity, &provider).unwrap();
                for v in journey_violations(&journeys, &tasks, n, capacity, &provider) {
                    bad.push(format!("n={n} cap={capacity} {quantities:?}: {v}"));
                }
            }
        }
    }
    (count, bad)
}

#[test]
fn c04_planner_dominates_naive_round_trips() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut not_worse, mut strict) = (0, 0);
    let mut bad = Vec::new();
    for _ in 0..200 {
        let n = rng.gen_range(2..=10);
        let reg = random_registry(&mut rng, n);
        let provider = DistanceProvider::haversine(&reg, 1.3).unwrap();
        let tasks = random_tasks(&mut rng, n);
        let capacity = rng.gen_range(1..=25);
        let journeys = build_journeys(&tasks, capacity, &provider).unwrap();
        let chained: f64 = journeys.iter().map(|j| j.total_km).sum();
        let naive = naive_round_trip_km(&tasks, capacity, &provider).unwrap();
        not_worse += usize::from(chained <= naive + 1e-9);
        strict += usize::from(chained < naive - 1e-9);
        bad.extend(journey_violations(&journeys, &tasks, n, capacity, &provider));
    }
    let (exhaustive, exhaustive_bad) = exhaustive_violations();
    if let Some(first) = bad.iter().chain(&exhaustive_bad).next() {
        println!("  first violation: {first}");
    }
    verdict(
        4,
        "planner_dominance",
        not_worse == 200 && strict >= 100 && bad.is_empty() && exhaustive_bad.is_empty(),
        format!(
            "chained <= naive on {not_worse}/200, strict on {strict}/200 (>= 100); invariant violations {} random, {} of {exhaustive} exhaustive",
            bad.len(),
            exhaustive_bad.len()
        ),
    );
}

#[test]
fn c05_jit_schedule_meets_deadlines() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut bad = Vec::new();
    let (mut legs_checked, mut flagged) = (0, 0);
    for _ in 0..100 {
        let n = rng.gen_range(2..=10);
        let reg = random_registry(&mut rng, n);
        let provider = DistanceProvider::haversine(&reg, 1.3).unwrap();
        let tasks = random_tasks(&mut rng, n);
        let speed = rng.gen_range(10.0..40.0);
        let load = rng.gen_range(0..15);
        let journeys = build_journeys(&tasks, rng.gen_range(1..=25), &provider).unwrap();
        let scheduled = schedule_journeys(&journeys, &tasks, speed, load).unwrap();
        let mut deadline: BTreeMap<usize, i64> = BTreeMap::new();
        for t in &tasks {
            let d = t.need_hour as i64 * 60;
            let e = deadline.entry(t.dest).or_insert(d);
            *e = (*e).min(d);
        }
        for (k, j) in scheduled.iter().enumerate() {
            if j.truck_id != k + 1 {
                bad.push(format!("truck id {} at position {k}", j.truck_id));
            }
            if j.tight_schedule {
                flagged += 1;
                if j.legs[0].dispatch_min < 0 {
                    bad.push(format!("flagged journey dispatches at {}", j.legs[0].dispatch_min));
                }
                continue;
            }
            for l in &j.legs {
                legs_checked += 1;
                if l.arrival_min > deadline[&l.station] {
                    bad.push(format!("leg to {} arrives {} after {}", l.station, l.arrival_min, deadline[&l.station]));
                }
            }
        }
    }

    // Hand trace: one leg, need at 08:00, 20 minutes driving, 5 minutes loading.
    let provider = DistanceProvider::Matrix(vec![vec![Some(0.0), Some(10.0)], vec![Some(10.0), Some(0.0)]]);
    let tasks = [TransferTask {
        source: 0,
        dest: 1,
        quantity: 3,
        need_hour: 8,
    }];
    let j = schedule_journeys(&build_journeys(&tasks, 20, &provider).unwrap(), &tasks, 30.0, 5).unwrap();
    let leg = &j[0].legs[0];
    let traced = (format_clock(leg.dispatch_min), format_clock(leg.arrival_min), j[0].tight_schedule);
    let trace_ok = traced == ("07:35".to_string(), "08:00".to_string(), false);
    if !trace_ok {
        println!("  hand trace gave {traced:?}");
    }
    verdict(
        5,
        "jit_schedule",
        bad.is_empty() && trace_ok,
        format!(
            "{legs_checked} unflagged legs on time, {flagged} flagged journeys, {} violations; 07:35 trace {}",
            bad.len(),
            if trace_ok { "matches" } else { "differs" }
        ),
    );
}

// ---------------------------------------------------------------- 6, 7

const NAMES: [&str; 12] = [
    "W 21 St & 6 Ave",
    "Broadway & E 14 St",
    "Pier 40",
    "1 Ave & E 62 St",
    "Central Park S & 6 Ave",
    "Elm Yard",
    "Dock 7",
    "8 Ave & W 33 St",
    "Grand Army Plaza",
    "E 47 St & 2 Ave",
    "Harbor Terminal",
    "Union Plaza",
];

fn random_plan(rng: &mut ChaCha8Rng, min_trucks: usize) -> JourneyPlan {
    let trucks = (0..rng.gen_range(min_trucks..7))
        .map(|i| {
            let mut clock = rng.gen_range(0..900);
            let legs: Vec<LegDoc> = (0..rng.gen_range(1..5))
                .map(|_| {
                    let dispatch = clock;
                    let arrival = dispatch + rng.gen_range(5..60);
                    clock = arrival + rng.gen_range(0..10);
                    LegDoc {
                        station: NAMES[rng.gen_range(0..NAMES.len())].to_string(),
                        drop: rng.gen_range(1..12),
                        dispatch_time: format_clock(dispatch),
                        arrival_time: format_clock(arrival),
                        km: rng.gen_range(1..900) as f64 / 100.0,
                    }
                })
                .collect();
            let total: f64 = legs.iter().map(|l| l.km).sum();
            TruckPlan {
                truck_id: i + 1,
                pickup: PickupDoc {
                    station: NAMES[rng.gen_range(0..NAMES.len())].to_string(),
                    load: legs.iter().map(|l| l.drop).sum(),
                },
                legs,
                total_km: (total * 100.0).round() / 100.0,
                tight_schedule: rng.gen_bool(0.2),
            }
        })
        .collect();
    let plan = JourneyPlan {
        date: "2016-07-01".into(),
        trucks,
    };
    plan.validate().expect("generator emits schema-valid plans");
    plan
}

/// Replaces the first occurrence of `from` on the leg line for `leg`.
fn mutate_leg_line(md: &str, leg: &LegDoc, from: &str, to: &str) -> String {
    let line = format!(
        "- {} — {} — drop {} {}",
        leg.arrival_time,
        leg.station,
        leg.drop,
        if leg.drop == 1 { "bike" } else { "bikes" }
    );
    assert!(md.contains(&line), "report lacks `{line}`");
    md.replacen(&line, &line.replacen(from, to, 1), 1)
}

#[test]
fn c06_grounding_accepts_reports_and_rejects_mutations() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut false_alarms = Vec::new();
    for _ in 0..500 {
        let plan = random_plan(&mut rng, 0);
        let md = format_report(&plan).unwrap().markdown;
        let g = ground_check(&md, &plan);
        if !g.passed() {
            false_alarms.push(g.violations.join("; "));
        }
    }

    let mut missed = Vec::new();
    for k in 0..20 {
        let plan = random_plan(&mut rng, 1);
        let md = format_report(&plan).unwrap().markdown;
        let truck = &plan.trucks[rng.gen_range(0..plan.trucks.len())];
        let leg = &truck.legs[rng.gen_range(0..truck.legs.len())];
        let (kind, mutated) = match k % 3 {
            0 => ("station rename", mutate_leg_line(&md, leg, &leg.station, "Zeta Wharf")),
            1 => {
                let used: Vec<u64> = plan
                    .trucks
                    .iter()
                    .flat_map(|t| t.legs.iter().map(|l| l.drop as u64).chain([t.pickup.load as u64, t.truck_id as u64]))
                    .chain([plan.total_bikes()])
                    .collect();
                let fresh = (25..).find(|v| !used.contains(v)).unwrap();
                let from = format!("drop {}", leg.drop);
                (
                    "quantity change",
                    mutate_leg_line(&md, leg, &from, &format!("drop {fresh}")),
                )
            }
            _ => {
                let used: Vec<&str> = plan
                    .trucks
                    .iter()
                    .flat_map(|t| t.legs.iter().flat_map(|l| [l.dispatch_time.as_str(), l.arrival_time.as_str()]))
                    .collect();
                let fresh = (0..1440).map(format_clock).find(|t| !used.contains(&t.as_str())).unwrap();
                ("time shift", mutate_leg_line(&md, leg, &leg.arrival_time, &fresh))
            }
        };
        assert_ne!(mutated, md);
        if ground_check(&mutated, &plan).passed() {
            missed.push(kind);
        }
    }
    if let Some(first) = false_alarms.first() {
        println!("  first false alarm: {first}");
    }
    verdict(
        6,
        "grounding",
        false_alarms.is_empty() && missed.is_empty(),
        format!(
            "{}/500 faithful reports pass, {}/20 mutations caught{}",
            500 - false_alarms.len(),
            20 - missed.len(),
            if missed.is_empty() { String::new() } else { format!(" (missed {missed:?})") }
        ),
    );
}

fn http(status: &str, body: &str) -> Vec<u8> {
    format!(
        "HTTP/1.1 {status}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    )
    .into_bytes()
}

/// Reads one request, then writes `reply` (nothing when `None`, holding the
/// socket open past the client's timeout).
fn serve_once(reply: Option<Vec<u8>>) -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
    std::thread::spawn(move || {
        let Ok((mut sock, _)) = listener.accept() else { return };
        sock.set_read_timeout(Some(Duration::from_millis(500))).ok();
        let mut buf = [0u8; 4096];
        let mut seen = Vec::new();
        while let Ok(k) = sock.read(&mut buf) {
            if k == 0 {
                break;
            }
            seen.extend_from_slice(&buf[..k]);
            let text = String::from_utf8_lossy(&seen);
            if let Some(pos) = text.find("\r\n\r\n") {
                let len: usize = text[..pos]
                    .lines()
                    .find_map(|l| l.to_ascii_lowercase().strip_prefix("content-length:").map(|v| v.trim().to_string()))
                    .and_then(|v| v.parse().ok())
                    .unwrap_or(0);
                if seen.len() >= pos + 4 + len {
                    break;
                }
            }
        }
        match reply {
            Some(bytes) => {
                let _ = sock.write_all(&bytes);
            }
            None => std::thread::sleep(Duration::from_millis(800)),
        }
    });
    url
}

fn completion(content: &str) -> String {
    serde_json::json!({"choices": [{"message": {"role": "assistant", "content": content}}]}).to_string()
}

#[test]
fn c07_fallback_is_total_under_chaos() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut deterministic, mut crashes) = (0, 0);
    let mut kinds: BTreeMap<&str, usize> = BTreeMap::new();
    for trial in 0..100 {
        let plan = random_plan(&mut rng, 1);
        let expected = format_report(&plan).unwrap().markdown;
        let (kind, reply) = match trial % 6 {
            0 => ("timeout", None),
            1 => ("http 500", Some(http("500 Internal Server Error", "{\"error\":\"boom\"}"))),
            2 => ("garbage bytes", Some((0..rng.gen_range(1..512)).map(|_| rng.gen::<u8>()).collect())),
            3 => ("garbage body", Some(http("200 OK", "<html>not json"))),
            4 => {
                let fake = format!("{expected}\n- 09:10 — Station Zeta — drop 4 bikes\n");
                ("hallucinated station", Some(http("200 OK", &completion(&fake))))
            }
            _ => ("missing choices", Some(http("200 OK", "{\"id\":\"x\"}"))),
        };
        *kinds.entry(kind).or_default() += 1;
        let mut cfg = EndpointConfig::new(serve_once(reply));
        cfg.timeout = Duration::from_millis(250);
        let got = std::panic::catch_unwind(|| generate_report(&plan, Some(&cfg)));
        match got {
            Ok(Ok(r)) if r.source == ReportSource::Deterministic && r.markdown == expected && r.fallback_reason.is_some() => {
                deterministic += 1
            }
            Ok(Ok(r)) => println!("  trial {trial} ({kind}) returned {:?}", r.source),
            Ok(Err(e)) => println!("  trial {trial} ({kind}) errored: {e}"),
            Err(_) => crashes += 1,
        }
    }
    verdict(
        7,
        "fallback_totality",
        deterministic == 100 && crashes == 0,
        format!("{deterministic}/100 deterministic, {crashes} crashes, faults {kinds:?}"),
    );
}

// ---------------------------------------------------------------- 8

fn determinism_config(out: &Path) -> Config {
    let mut cfg = Config::from_toml_str(
        "seeds = [1, 2, 3]\n[data.synthetic]\n[train]\ntotal_timesteps = 3000\nlearning_starts = 500\nhidden_sizes = [32, 32]\n[report]\nuse_llm = false\n",
    )
    .unwrap();
    cfg.out_dir = out.to_path_buf();
    cfg
}

#[test]
fn c08_run_all_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let runs: Vec<_> = [("a", 1), ("b", 1), ("concurrent", 3)]
        .iter()
        .map(|&(name, threads)| {
            let out = dir.path().join(name);
            rebal_core::pipeline::run_all(&determinism_config(&out), threads).unwrap();
            out
        })
        .collect();
    let mut files = vec!["aggregate.json".to_string()];
    for seed in 1..=3 {
        for f in ["checkpoint.json", "plan.json", "report.md", "episode.jsonl"] {
            files.push(format!("seed_{seed}/{f}"));
        }
        files.push(format!("run_{seed}.json"));
    }
    let mut differing = Vec::new();
    for f in &files {
        let base = std::fs::read(runs[0].join(f)).unwrap();
        for other in &runs[1..] {
            if std::fs::read(other.join(f)).unwrap() != base {
                differing.push(format!("{} {f}", other.file_name().unwrap().to_string_lossy()));
            }
        }
    }
    verdict(
        8,
        "determinism",
        differing.is_empty(),
        format!(
            "{} artifacts compared across 2 sequential runs and 1 concurrent run, {} differ {differing:?}",
            files.len(),
            differing.len()
        ),
    );
}

// ---------------------------------------------------------------- 9

#[test]
fn c09_environment_invariants() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut steps = 0;
    let mut bad = Vec::new();
    let mut after_done_rejected = 0;
    let mut episodes = 0;
    while steps < 10_000 {
        let n = rng.gen_range(2..9);
        let stations: Vec<Station> = (0..n)
            .map(|i| {
                let cap = rng.gen_range(1..21);
                Station::with_target(format!("s{i}"), format!("S {i}"), 40.7, -74.0, cap, rng.gen_range(0..=cap)).unwrap()
            })
            .collect();
        let reg = Arc::new(StationRegistry::new(stations).unwrap());
        let mut profile = DemandProfile::zeros((0..n).map(|i| format!("s{i}")).collect());
        for row in profile.deltas.iter_mut() {
            for d in row.iter_mut() {
                *d = rng.gen_range(-5..=5);
            }
        }
        let profile = Arc::new(profile);
        let hours = rng.gen_range(1..30);
        let mut env = RebalanceEnv::new(reg.clone(), profile.clone(), RewardConfig::default(), hours).unwrap();
        env.reset(rng.gen());
        episodes += 1;
        let caps = reg.capacities();
        loop {
            if env.observation().unwrap().len() != n + 1 {
                bad.push("observation length".to_string());
            }
            let action = rng.gen_range(0..env.action_count());
            let (src, dst) = (action / (n - 1), {
                let j = action % (n - 1);
                if j >= action / (n - 1) {
                    j + 1
                } else {
                    j
                }
            });
            let before = env.state().unwrap().clone();
            let out = env.step(action).unwrap();
            steps += 1;
            let feasible = before.inventories[src] > 0 && before.inventories[dst] < caps[dst];
            let mut moved = before.inventories.clone();
            if feasible {
                moved[src] -= 1;
                moved[dst] += 1;
            }
            if moved.iter().map(|&v| v as u64).sum::<u64>() != before.total_bikes() {
                bad.push("transfer not zero-sum".into());
            }
            let expected: Vec<u32> = (0..n)
                .map(|i| (moved[i] as i64 + profile.delta(i, before.hour as usize) as i64).clamp(0, caps[i] as i64) as u32)
                .collect();
            if out.next_state.inventories != expected || out.info.action_feasible != feasible {
                bad.push(format!("step from {before:?} action {action}: got {:?}", out.next_state));
            }
            if out.next_state.inventories.iter().zip(&caps).any(|(v, c)| v > c) {
                bad.push("inventory above capacity".into());
            }
            if out.next_state.hour != (before.hour + 1) % 24 {
                bad.push("clock".into());
            }
            if out.done {
                if matches!(env.step(0), Err(Error::Contract(_))) {
                    after_done_rejected += 1;
                } else {
                    bad.push("step after done accepted".into());
                }
                break;
            }
        }
    }
    if let Some(first) = bad.first() {
        println!("  first violation: {first}");
    }
    verdict(
        9,
        "environment_invariants",
        bad.is_empty() && after_done_rejected == episodes,
        format!(
            "{steps} random steps over {episodes} episodes, {} violations, step-after-done rejected {after_done_rejected}/{episodes}",
            bad.len()
        ),
    );
}

// ---------------------------------------------------------------- 10

#[test]
fn c10_utilization_two_of_three() {
    let leg = |station| Leg {
        station,
        drop: 1,
        km: 1.0,
        dispatch_min: 0,
        arrival_min: 0,
        deadline_min: 0,
    };
    let journey = |id, legs: Vec<Leg>| Journey {
        truck_id: id,
        pickup: 0,
        load: legs.len() as u32,
        legs,
        total_km: 0.0,
        tight_schedule: false,
    };
    let journeys = [
        journey(1, vec![leg(1), leg(2)]),
        journey(2, vec![leg(3)]),
        journey(3, vec![leg(1), leg(2), leg(3)]),
    ];
    let u = truck_utilization(&journeys);
    let shown = format!("{:.2}", u.value);
    verdict(
        10,
        "utilization",
        shown == "66.67" && (u.value - 200.0 / 3.0).abs() < 1e-12 && !u.degenerate,
        format!("{shown}% (66.67)"),
    );
}
