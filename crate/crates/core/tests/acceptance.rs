//! Acceptance suite: one test per criterion, each printing a `[PASS]` line
//! with its runtime (visible with `cargo test --test acceptance -- --nocapture`).
//!
//! Criteria 4-6 share one 8-week, 50-antenna benchmark fixture and its
//! trained models through `OnceLock` caches.

use std::collections::BTreeSet;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use urbanpulse_core::adaptive::{chart_step, AdaptiveChartState, ChartParams};
use urbanpulse_core::eval::{
    detection_latency, expand_ground_truth, score_alarm_set, EvalParams, EvalUniverse, GeoPoint,
    GroundTruthMask,
};
use urbanpulse_core::levels::{LevelThresholds, Sensitivity};
use urbanpulse_core::pipeline::{
    alarm_set_at, calibrate, detect, pr_curve_points, train_models, Method, RunConfig,
    TrainedModels,
};
use urbanpulse_core::signature::{fit_gamma, DeviationModel, TailParams};
use urbanpulse_core::synth::{
    build_registry, gen_nominal, inject_events, EventShape, EventSpec, GridSpec, NoiseSpec,
    Scenario, ServiceSpec, TrafficProfile,
};
use urbanpulse_core::telemetry::{ActivityCube, CellId, CellRegistry, Minute, TimeSpan};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Distribution;

fn report_pass(criterion: &str, detail: String, elapsed: Duration, budget_s: u64) {
    println!("[PASS] {criterion}: {detail} ({elapsed:.2?})");
    assert!(
        elapsed.as_secs() < budget_s,
        "{criterion} exceeded its {budget_s}s runtime budget: {elapsed:?}"
    );
}

// ═════════════════════════════════ Criterion 1 ══════════════════════════
// No-skill closed forms vs Monte-Carlo random detectors.

#[test]
fn criterion_1_noskill_closed_forms() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xC1);
    let cells: Vec<CellId> =
        (0..50).map(|i| CellId::new(format!("mc{i:02}")).unwrap()).collect();
    let span = TimeSpan::new(Minute::new(0), Minute::new(10_000));
    let universe = EvalUniverse::new(cells.iter().cloned().collect(), span);
    let total = universe.total_antenna_minutes();
    let rates = [1.0 / 240.0, 1.0 / 480.0, 1.0 / 720.0, 1.0 / 1440.0];

    for rep in 0..20 {
        // Masks large enough that the binomial 3-sigma band is meaningful
        // even at the rarest alarm rate.
        let mask_size = rng.random_range(20_000..60_000usize);
        let mut union = BTreeSet::new();
        while union.len() < mask_size {
            let cell = cells[rng.random_range(0..cells.len())].clone();
            let minute = Minute::new(rng.random_range(0..span.len()));
            union.insert((cell, minute));
        }
        let mask = GroundTruthMask { events: vec![], union, undetectable: vec![] };
        let rate = rates[rep % rates.len()];

        // Monte-Carlo random detector at frequency `rate`.
        let mut alarms = BTreeSet::new();
        for cell in &cells {
            for t in span.minutes() {
                if rng.random::<f64>() < rate {
                    alarms.insert((cell.clone(), t));
                }
            }
        }
        let report =
            score_alarm_set(&alarms, &mask, &universe, rate, &EvalParams::default()).unwrap();

        // Analytic forms under test.
        let (p_analytic, r_analytic) = (report.noskill_precision, report.noskill_recall);
        assert_eq!(p_analytic, mask_size as f64 / total as f64);
        assert_eq!(r_analytic, rate);

        let m = (report.true_positives + report.false_positives) as f64;
        assert!(m > 0.0, "rep {rep}: random detector produced no alarms");
        let mc_precision = report.true_positives as f64 / m;
        let sigma_p = (p_analytic * (1.0 - p_analytic) / m).sqrt();
        assert!(
            (mc_precision - p_analytic).abs() <= 3.0 * sigma_p,
            "rep {rep}: precision {mc_precision} vs {p_analytic} ± 3·{sigma_p}"
        );

        let mc_recall = report.true_positives as f64 / mask_size as f64;
        let sigma_r = (rate * (1.0 - rate) / mask_size as f64).sqrt();
        assert!(
            (mc_recall - r_analytic).abs() <= 3.0 * sigma_r,
            "rep {rep}: recall {mc_recall} vs {r_analytic} ± 3·{sigma_r}"
        );
    }
    report_pass(
        "criterion 1",
        "no-skill precision |GT+|/T and recall r match Monte-Carlo within 3 binomial sigma over 20 masks".into(),
        start.elapsed(),
        60,
    );
}

// ═════════════════════════════════ Criterion 2 ══════════════════════════
// Three-scalar chart equals full-history decayed brute force.

#[test]
fn criterion_2_adaptive_chart_oracle() {
    let start = Instant::now();
    let params = ChartParams { tau_minutes: 1440.0, h: 3.0, sigma_floor: 0.3 };

    // Weight semantics: age τ weighs exactly one half.
    assert_eq!(params.decay_weight(params.tau_minutes), 0.5);
    assert_eq!(params.decay_weight(2.0 * params.tau_minutes), 0.25);

    let mut rng = ChaCha8Rng::seed_from_u64(0xC2);
    let normal = rand_distr::Normal::new(5.0, 2.0).unwrap();
    let seed_values: Vec<f64> = (0..500).map(|_| normal.sample(&mut rng)).collect();

    let mut state = AdaptiveChartState::seed(&params, &seed_values);
    // Brute force keeps (age, value) for every incorporated observation.
    let mut history: Vec<(f64, f64)> = seed_values
        .iter()
        .enumerate()
        .map(|(i, &v)| ((seed_values.len() - 1 - i) as f64, v))
        .collect();

    let mut flag_count = 0usize;
    for step in 0..10_000 {
        // Spikes exercise the no-update rule.
        let eps =
            if step % 137 == 0 { 60.0 } else { normal.sample(&mut rng) };

        let mut s0 = 0.0;
        let mut s1 = 0.0;
        let mut s2 = 0.0;
        for &(age, v) in &history {
            let w = params.decay_weight(age);
            s0 += w;
            s1 += w * v;
            s2 += w * v * v;
        }
        let brute_mu = s1 / s0;
        let brute_sigma = (s2 / s0 - brute_mu * brute_mu).max(0.0).sqrt();

        let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1.0);
        assert!(
            rel(state.mean(), brute_mu) < 1e-9,
            "step {step}: mean {} vs brute {brute_mu}",
            state.mean()
        );
        assert!(
            rel(state.std(), brute_sigma) < 1e-9,
            "step {step}: std {} vs brute {brute_sigma}",
            state.std()
        );

        let brute_flag = eps >= brute_mu + params.h * brute_sigma.max(params.sigma_floor);
        let score = chart_step(&mut state, &params, eps);
        assert_eq!(score.flagged, brute_flag, "step {step}: flag disagreement");
        if score.flagged {
            flag_count += 1;
        }

        for entry in &mut history {
            entry.0 += 1.0;
        }
        if !brute_flag {
            history.push((0.0, eps));
        }
    }
    assert!(flag_count >= 50, "spikes must actually flag (got {flag_count})");
    report_pass(
        "criterion 2",
        format!(
            "three-scalar chart matches brute force to 1e-9 over 10000 steps ({flag_count} flags), weight(τ) = 1/2 exactly"
        ),
        start.elapsed(),
        10,
    );
}

// ═════════════════════════════════ Criterion 3 ══════════════════════════
// Gamma-tail recovery and stitched-survival continuity/monotonicity.

#[test]
fn criterion_3_gamma_tail_recovery_and_stitch() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xC3);
    let gamma = rand_distr::Gamma::new(2.0, 5.0).unwrap();
    let exceedances: Vec<f64> = (0..5000).map(|_| gamma.sample(&mut rng)).collect();
    let fit = fit_gamma(&exceedances).unwrap();
    assert!(
        (fit.shape - 2.0).abs() / 2.0 <= 0.10,
        "shape {} outside ±10% of 2.0",
        fit.shape
    );
    assert!(
        (fit.scale - 5.0).abs() / 5.0 <= 0.10,
        "scale {} outside ±10% of 5.0",
        fit.scale
    );

    // Full compound model on a heavy-ish sample.
    let lognormal = rand_distr::LogNormal::new(1.0, 0.6).unwrap();
    let sample: Vec<f64> = (0..30_000).map(|_| lognormal.sample(&mut rng)).collect();
    let model = DeviationModel::fit(&sample, &TailParams::default()).unwrap();

    // Continuity at the join: both branches evaluated at θ give p_tail.
    let below = model.empirical().survival(model.theta()).max(model.p_tail());
    let at = model.survival(model.theta());
    assert!((below - at).abs() < 1e-12, "join gap {}", (below - at).abs());
    assert!((at - model.p_tail()).abs() < 1e-12);

    // Monotone, strictly positive survival over a 10^4-point grid spanning
    // both branches.
    let lo = model.empirical().min_value() - 1.0;
    let hi = model.theta() + 60.0;
    let mut prev = f64::INFINITY;
    for i in 0..=10_000 {
        let eps = lo + (hi - lo) * i as f64 / 10_000.0;
        let s = model.survival(eps);
        assert!(s > 0.0 && s <= 1.0, "survival {s} out of range at {eps}");
        assert!(s <= prev + 1e-15, "survival increased at {eps}");
        prev = s;
    }
    report_pass(
        "criterion 3",
        format!(
            "Gamma(2,5) recovered as ({:.3}, {:.3}); stitched survival continuous (<1e-12) and monotone on 10^4 points",
            fit.shape, fit.scale
        ),
        start.elapsed(),
        10,
    );
}

// ═══════════════════════════ Shared benchmark fixture ═══════════════════

const BENCH_WEEKS: u32 = 8;
const TRAIN_WEEKS: i64 = 5;
const GRID_ROWS: usize = 10;
const GRID_COLS: usize = 5;
const SPACING_M: f64 = 250.0;
const ORIGIN_LAT: f64 = 48.8450;
const ORIGIN_LON: f64 = 2.3400;
const N_EVENTS: usize = 30;
const N_JUMP: usize = 20;

struct Bench {
    registry: CellRegistry,
    nominal: ActivityCube,
    injected: ActivityCube,
    events: Vec<urbanpulse_core::eval::UncommonEvent>,
    jump_ids: BTreeSet<String>,
    event_starts: Vec<(String, Minute)>,
    train_span: TimeSpan,
    test_span: TimeSpan,
}

fn antenna_position(row: usize, col: usize) -> GeoPoint {
    let meters_per_deg_lat = 111_195.0;
    let meters_per_deg_lon = 111_195.0 * ORIGIN_LAT.to_radians().cos();
    GeoPoint {
        lat: ORIGIN_LAT + row as f64 * SPACING_M / meters_per_deg_lat,
        lon: ORIGIN_LON + col as f64 * SPACING_M / meters_per_deg_lon,
    }
}

fn bench_scenario() -> Scenario {
    let test_offset = TRAIN_WEEKS * 10_080;
    let mut events = Vec::new();
    for i in 0..N_EVENTS {
        let row = (i * 3 + 1) % GRID_ROWS;
        let col = (i * 2 + i / 10) % GRID_COLS;
        let onset = test_offset + 400 + i as i64 * 990;
        let (shape, magnitude, duration) = if i < N_JUMP {
            (EventShape::JumpDecay, 6.0 + (i % 5) as f64, 60)
        } else {
            (EventShape::GradualRamp, 7.0, 120)
        };
        events.push(EventSpec {
            id: format!("bench-{i:02}"),
            shape,
            magnitude,
            epicenter: antenna_position(row, col),
            decay_radius_m: 150.0,
            onset_minute: onset,
            duration_min: duration,
            services: Default::default(),
            decay_time_constant_min: 30.0,
            radius_m: None,
            label: None,
        });
    }
    Scenario {
        name: "acceptance-bench".into(),
        grid: GridSpec {
            rows: GRID_ROWS,
            cols: GRID_COLS,
            spacing_m: SPACING_M,
            origin_lat: ORIGIN_LAT,
            origin_lon: ORIGIN_LON,
        },
        services: vec![
            ServiceSpec { name: "call3g".into(), rate_scale: 0.5 },
            ServiceSpec { name: "call4g".into(), rate_scale: 1.5 },
            ServiceSpec { name: "sms3g".into(), rate_scale: 0.4 },
            ServiceSpec { name: "sms4g".into(), rate_scale: 1.2 },
        ],
        weeks: BENCH_WEEKS,
        start: "2019-03-18T00:00Z".into(),
        profile: TrafficProfile {
            base_rate: 14.0,
            daily_amplitude: 0.45,
            weekly_amplitude: 0.1,
            cell_scale_spread: 0.5,
            week_jitter_sigma: 0.02,
            noise: NoiseSpec::NegBinom { dispersion: 1.5 },
        },
        events,
        seed: 20190318,
    }
}

fn bench() -> &'static Bench {
    static BENCH: OnceLock<Bench> = OnceLock::new();
    BENCH.get_or_init(|| {
        let scenario = bench_scenario();
        let registry = build_registry(&scenario.grid);
        let nominal = gen_nominal(&scenario, &registry).unwrap();
        let mut injected = nominal.clone();
        let (events, warnings) = inject_events(&mut injected, &scenario, &registry).unwrap();
        assert!(warnings.is_empty(), "benchmark events out of antenna reach: {warnings:?}");
        let span = nominal.span();
        let train_span = TimeSpan::new(span.start, span.start + TRAIN_WEEKS * 10_080);
        let test_span = TimeSpan::new(train_span.end, span.end);
        let jump_ids = scenario
            .events
            .iter()
            .filter(|e| e.shape == EventShape::JumpDecay)
            .map(|e| e.id.clone())
            .collect();
        let event_starts = events.iter().map(|e| (e.id.clone(), e.start)).collect();
        Bench {
            registry,
            nominal,
            injected,
            events,
            jump_ids,
            event_starts,
            train_span,
            test_span,
        }
    })
}

fn bench_config(method: Method) -> RunConfig {
    let mut config = RunConfig::default();
    config.method = method;
    config
}

struct MethodArtifacts {
    models: TrainedModels,
    thresholds: LevelThresholds,
    config: RunConfig,
}

fn trained(method: Method) -> &'static MethodArtifacts {
    static SIGNATURE: OnceLock<MethodArtifacts> = OnceLock::new();
    static ADAPTIVE: OnceLock<MethodArtifacts> = OnceLock::new();
    let slot = match method {
        Method::Signature => &SIGNATURE,
        Method::Adaptive => &ADAPTIVE,
    };
    slot.get_or_init(|| {
        let bench = bench();
        let config = bench_config(method);
        let train = bench.nominal.window(bench.train_span);
        let (models, scores) =
            train_models(&train, Some(bench.test_span.start), &config).unwrap();
        assert_eq!(
            models.pairs.len(),
            200,
            "all 50×4 bench pairs must fit ({} skipped: {:?})",
            models.skipped.len(),
            models.skipped.first()
        );
        let thresholds = calibrate(&scores, &config);
        assert_eq!(thresholds.antennas.len(), 50, "all antennas calibrated");
        MethodArtifacts { models, thresholds, config }
    })
}

// ═════════════════════════════════ Criterion 4 ══════════════════════════
// Held-out alarm rates match the calibrated frequencies.

#[test]
fn criterion_4_level_calibration_rates() {
    let start = Instant::now();
    let bench = bench();
    let held_out_minutes = (50 * bench.test_span.len()) as f64;
    let mut details = Vec::new();

    for method in [Method::Signature, Method::Adaptive] {
        let artifacts = trained(method);
        let nominal_test = bench.nominal.window(bench.test_span);
        let alarms = detect(&artifacts.models, &artifacts.thresholds, &nominal_test);

        let level1 = alarms.iter().filter(|a| a.level >= 1).count() as f64;
        let level3 = alarms.iter().filter(|a| a.level >= 3).count() as f64;
        let rate1 = level1 / held_out_minutes;
        let rate3 = level3 / held_out_minutes;
        assert!(
            (1.0 / 300.0..=1.0 / 190.0).contains(&rate1),
            "{}: held-out level-1 rate {rate1:.6} (1/{:.0}) outside [1/300, 1/190]",
            method.label(),
            1.0 / rate1
        );
        assert!(
            rate3 <= 3.0 / 10_080.0,
            "{}: held-out level-3 rate {rate3:.6} above 3/10080",
            method.label()
        );
        details.push(format!(
            "{}: level-1 1/{:.0}, level-3 1/{:.0}",
            method.label(),
            1.0 / rate1,
            if rate3 > 0.0 { 1.0 / rate3 } else { f64::INFINITY }
        ));
    }
    report_pass(
        "criterion 4",
        format!("held-out alarm rates within bands ({})", details.join("; ")),
        start.elapsed(),
        300,
    );
}

// ═════════════════════════════════ Criterion 5 ══════════════════════════
// Detection skill on the injected benchmark.

#[test]
fn criterion_5_detection_skill() {
    let start = Instant::now();
    let bench = bench();
    let mask = expand_ground_truth(&bench.events, &bench.registry, 300.0);
    let universe =
        EvalUniverse::new(bench.registry.cell_ids().cloned().collect(), bench.test_span);
    let mut details = Vec::new();

    for method in [Method::Signature, Method::Adaptive] {
        let artifacts = trained(method);
        let test = bench.injected.window(bench.test_span);
        let alarms = detect(&artifacts.models, &artifacts.thresholds, &test);
        let alarm_set: BTreeSet<(CellId, Minute)> =
            alarms.iter().map(|a| (a.cell.clone(), a.minute)).collect();

        let report = score_alarm_set(
            &alarm_set,
            &mask,
            &universe,
            Sensitivity::H4.rate_per_minute(),
            &EvalParams::default(),
        )
        .unwrap();

        assert_eq!(report.evaluated_events, N_EVENTS);
        assert!(
            report.recall_event >= 0.80,
            "{}: event recall {:.3} below 80%",
            method.label(),
            report.recall_event
        );

        // Jump-decay onsets must be caught within the 15-minute window.
        let mut jump_detected = 0usize;
        for event_mask in &mask.events {
            if !bench.jump_ids.contains(&event_mask.event_id) {
                continue;
            }
            let start_minute = bench
                .event_starts
                .iter()
                .find(|(id, _)| *id == event_mask.event_id)
                .map(|(_, m)| *m)
                .unwrap();
            if let Some(latency) = detection_latency(event_mask, start_minute, &alarm_set) {
                assert!(
                    latency <= 15,
                    "{}: event {} detected after {latency} minutes",
                    method.label(),
                    event_mask.event_id
                );
                jump_detected += 1;
            }
        }
        assert!(
            jump_detected as f64 >= 0.80 * N_JUMP as f64,
            "{}: only {jump_detected}/{N_JUMP} jump-decay events detected",
            method.label()
        );

        let precision = report.precision.expect("alarms were emitted");
        assert!(
            precision >= 10.0 * report.noskill_precision,
            "{}: precision {precision:.4} below 10x no-skill {:.4}",
            method.label(),
            report.noskill_precision
        );
        details.push(format!(
            "{}: event recall {:.0}%, {}x no-skill precision, {jump_detected}/{N_JUMP} jumps <= 15 min",
            method.label(),
            report.recall_event * 100.0,
            (precision / report.noskill_precision).round()
        ));
    }
    report_pass("criterion 5", details.join("; "), start.elapsed(), 900);
}

// ═════════════════════════════════ Criterion 6 ══════════════════════════
// PR-curve monotonicity and service-subset ablations.

#[test]
fn criterion_6_pr_monotonicity_and_ablations() {
    let start = Instant::now();
    let bench = bench();

    // Monotone minute recall for both methods on the benchmark.
    for method in [Method::Signature, Method::Adaptive] {
        let artifacts = trained(method);
        let test = bench.injected.window(bench.test_span);
        let alarms = detect(&artifacts.models, &artifacts.thresholds, &test);
        let points = pr_curve_points(
            &alarms,
            &artifacts.thresholds,
            &bench.events,
            &bench.registry,
            bench.test_span,
            &artifacts.config,
            false,
        )
        .unwrap();
        assert_eq!(points.len(), 6, "{}: incomplete PR curve", method.label());
        for pair in points.windows(2) {
            assert!(
                pair[1].recall_minute <= pair[0].recall_minute + 1e-15,
                "{}: minute recall increased from {} to {} at {}",
                method.label(),
                pair[0].recall_minute,
                pair[1].recall_minute,
                pair[1].sensitivity.label()
            );
            assert!(
                pair[1].recall_event <= pair[0].recall_event + 1e-15,
                "{}: event recall increased at {}",
                method.label(),
                pair[1].sensitivity.label()
            );
        }
    }

    // Ablations over service subsets, re-trained and re-calibrated each.
    let subsets: [&[&str]; 4] = [
        &["call4g"],
        &["sms4g"],
        &["call3g", "call4g"],
        &["call3g", "call4g", "sms3g", "sms4g"],
    ];
    let train = bench.nominal.window(bench.train_span);
    let test = bench.injected.window(bench.test_span);
    for subset in subsets {
        let mut config = bench_config(Method::Signature);
        config.services = Some(subset.iter().map(|s| s.to_string()).collect());
        let (models, scores) =
            train_models(&train, Some(bench.test_span.start), &config).unwrap();
        assert_eq!(models.pairs.len(), 50 * subset.len());
        let thresholds = calibrate(&scores, &config);
        let alarms = detect(&models, &thresholds, &test);

        // Nested alarm sets per threshold and a complete curve.
        let mut previous: Option<BTreeSet<(CellId, Minute)>> = None;
        for sensitivity in Sensitivity::ALL {
            let set = alarm_set_at(&alarms, &thresholds, sensitivity);
            if let Some(prev) = &previous {
                assert!(
                    set.is_subset(prev),
                    "subset {subset:?}: alarms at {} not nested",
                    sensitivity.label()
                );
            }
            previous = Some(set);
        }
        let points = pr_curve_points(
            &alarms,
            &thresholds,
            &bench.events,
            &bench.registry,
            bench.test_span,
            &config,
            false,
        )
        .unwrap();
        assert_eq!(points.len(), 6, "subset {subset:?}: incomplete PR curve");
    }
    report_pass(
        "criterion 6",
        "minute recall monotone across 6 sensitivities for both methods; 4 ablation subsets complete with nested alarm sets".into(),
        start.elapsed(),
        900,
    );
}

// ═════════════════════════════════ Criterion 7 ══════════════════════════
// Byte-identical artifacts for identical config and seed.

#[test]
fn criterion_7_pipeline_determinism() {
    use urbanpulse_core::pipeline::{
        stage_calibrate, stage_detect, stage_evaluate, stage_export_map, stage_pr_curve,
        stage_synth, stage_train,
    };

    let start = Instant::now();
    let root = std::path::PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..");
    let scenario = root.join("scenarios/sample_small.json").canonicalize().unwrap();

    // Shared inputs generated once; the two runs then read identical paths.
    let shared = tempfile::tempdir().unwrap();
    let mut synth_config = RunConfig::default();
    synth_config.inputs.scenario = Some(scenario);
    stage_synth(&synth_config, shared.path()).unwrap();

    let mut config = RunConfig::default();
    config.fold = Some(urbanpulse_core::pipeline::FoldConfig { count: 3, test_index: 2 });
    config.params.signature.min_training_weeks = 2;
    config.inputs.data = Some(shared.path().join("activity.csv"));
    config.inputs.cells = Some(shared.path().join("cells.csv"));
    config.inputs.dbue = Some(shared.path().join("dbue.json"));

    let run = |out_dir: &std::path::Path| {
        stage_train(&config, out_dir).unwrap();
        stage_calibrate(&config, out_dir, false).unwrap();
        stage_detect(&config, out_dir, false).unwrap();
        stage_evaluate(&config, out_dir, false).unwrap();
        stage_pr_curve(&config, out_dir, false, false).unwrap();
        stage_export_map(&config, out_dir, false).unwrap();
    };
    let out_a = tempfile::tempdir().unwrap();
    let out_b = tempfile::tempdir().unwrap();
    run(out_a.path());
    run(out_b.path());

    let mut compared = 0usize;
    let mut stack = vec![std::path::PathBuf::new()];
    while let Some(rel) = stack.pop() {
        for entry in std::fs::read_dir(out_a.path().join(&rel)).unwrap() {
            let entry = entry.unwrap();
            let rel_path = rel.join(entry.file_name());
            if entry.file_type().unwrap().is_dir() {
                stack.push(rel_path);
            } else {
                let a = std::fs::read(out_a.path().join(&rel_path)).unwrap();
                let b = std::fs::read(out_b.path().join(&rel_path)).unwrap();
                assert_eq!(a, b, "artifact {} differs between identical runs", rel_path.display());
                compared += 1;
            }
        }
    }
    assert!(compared >= 6, "expected a full artifact set, compared only {compared}");
    report_pass(
        "criterion 7",
        format!("{compared} artifacts byte-identical across two identical runs"),
        start.elapsed(),
        300,
    );
}
