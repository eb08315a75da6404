//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion
//! and exits non-zero if any fails.
//!
//! `cargo test --release --test acceptance` is much faster than a debug run.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

use adhoc_ssl::acoustics::simulate_rir;
use adhoc_ssl::acoustics::RirConfig;
use adhoc_ssl::features::{gcc_phat, Grid, GccConfig, MultichannelFrame};
use adhoc_ssl::harness::{
    localize, prepare, training_example, DatasetConfig, LocalizeConfig, Method, Split, SynthesisConfig,
};
use adhoc_ssl::neural::{
    batch_gradients, dataset_loss, decode_checkpoint, encode_checkpoint, relnet_forward, target_map, train,
    FeatureConfig, FeatureKind, RelNet, RelNetSpec, TrainConfig, TrainingExample,
};
use adhoc_ssl::scene::{distance, distance2d, sample_scene, MetadataVector, SceneDistribution};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

const FS: f64 = 16_000.0;
const C: f64 = 343.0;

type Outcome = Result<String, String>;

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn gcc_delay_recovery() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (len, trials) = (8000, 1000);
    let mut exact = 0;
    for _ in 0..trials {
        let d = rng.random_range(-50i64..=50) as isize;
        let src: Vec<f64> = (0..len + 100).map(|_| StandardNormal.sample(&mut rng)).collect();
        // x_j(t) = x_i(t - d), both cut from one longer noise sequence.
        let x_i: Vec<f64> = src[50..50 + len].to_vec();
        let x_j: Vec<f64> = src[(50 - d) as usize..(50 - d) as usize + len].to_vec();
        let power = x_i.iter().map(|v| v * v).sum::<f64>() / len as f64;
        let sigma = (power / 10f64.powf(3.0)).sqrt();
        let mut noisy = |x: &[f64]| -> Vec<f64> {
            x.iter().map(|v| { let n: f64 = StandardNormal.sample(&mut rng); v + sigma * n }).collect()
        };
        let (x_i, x_j) = (noisy(&x_i), noisy(&x_j));
        let corr = gcc_phat(&x_i, &x_j, FS, &GccConfig::default()).map_err(|e| e.to_string())?;
        if corr.peak_lag(corr.fft_size() / 2) == -d {
            exact += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let rate = exact as f64 / trials as f64;
    verdict(rate >= 0.99 && secs < 60.0, format!("{exact}/{trials} exact lags, {secs:.1} s"))
}

/// Decay time from a least-squares line through the Schroeder curve
/// between -5 and -25 dB, scaled to 60 dB.
fn schroeder_decay_time(taps: &[f64], fs: f64) -> f64 {
    let total: f64 = taps.iter().map(|v| v * v).sum();
    let mut remaining = total;
    let mut points = Vec::new();
    for (i, v) in taps.iter().enumerate() {
        let db = 10.0 * (remaining / total).log10();
        if (-25.0..=-5.0).contains(&db) {
            points.push((i as f64 / fs, db));
        }
        remaining -= v * v;
    }
    let n = points.len() as f64;
    let mean_t = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_db = points.iter().map(|p| p.1).sum::<f64>() / n;
    let cov: f64 = points.iter().map(|p| (p.0 - mean_t) * (p.1 - mean_db)).sum();
    let var: f64 = points.iter().map(|p| (p.0 - mean_t).powi(2)).sum();
    -60.0 / (cov / var)
}

fn rir_physics() -> Outcome {
    let dist = SceneDistribution::default();
    let mut tap_misses = 0;
    let mut decay_misses = Vec::new();
    let mut responses = 0;
    let mut worst: f64 = 0.0;
    for seed in 0..200 {
        let scene = sample_scene(&dist, seed).map_err(|e| e.to_string())?;
        for mic in &scene.mics.positions {
            let rir = simulate_rir(&scene.room, &scene.source.position, mic, FS, &RirConfig::default())
                .map_err(|e| e.to_string())?;
            responses += 1;
            let expected = (FS * distance(&scene.source.position, mic) / C).round() as usize;
            if rir.first_nonzero() != Some(expected) {
                tap_misses += 1;
            }
            let ratio = schroeder_decay_time(&rir.taps, FS) / scene.room.t60;
            worst = worst.max((ratio - 1.0).abs());
            if !(0.8..=1.2).contains(&ratio) {
                decay_misses.push((seed, ratio));
            }
        }
    }
    verdict(
        tap_misses == 0 && decay_misses.is_empty(),
        format!(
            "{responses} responses: {tap_misses} direct-tap misses, {} decay times outside ±20% (worst deviation {:.1}%)",
            decay_misses.len(),
            100.0 * worst
        ),
    )
}

fn anechoic_oracle() -> Outcome {
    let cfg = DatasetConfig {
        master_seed: 3,
        test: 200,
        test_mic_counts: vec![5],
        synthesis: SynthesisConfig { anechoic: true, snr_db: f64::INFINITY, ..Default::default() },
        ..Default::default()
    };
    let lc = LocalizeConfig::default();
    let hits: Vec<bool> = (0..200)
        .into_par_iter()
        .map(|i| {
            let (scene, signals) = cfg.example(Split::Test, i).unwrap().expect("feasible placement");
            let (frame, meta) = prepare(&scene, &signals, lc.frame_ms).unwrap();
            let r = localize(Method::Slf, &frame, &meta, &lc, None).unwrap();
            let grid = Grid::for_room(lc.grid_n, &scene.room).unwrap();
            let limit = grid.cell_diagonal().min(0.2 * 2f64.sqrt() * scene.room.width / 5.0);
            distance2d(&r.estimate, &scene.source.xy()) <= limit
        })
        .collect();
    let n = hits.iter().filter(|h| **h).count();
    verdict(n as f64 >= 0.95 * 200.0, format!("{n}/200 estimates within a cell diagonal"))
}

fn gradient_check() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let h = 1e-5;
    let (mut checked, mut skipped, mut worst, mut worst_grad) = (0, 0, 0.0f64, 0.0f64);
    for net in 0..20u64 {
        let features = FeatureConfig { grid_n: 3, ..Default::default() };
        let width = features.input_size();
        let hidden = rng.random_range(4..12);
        let spec = RelNetSpec { features, relation_layers: vec![hidden, 9], fusion_layers: vec![hidden, 9] };
        let model = RelNet::new(spec, net).map_err(|e| e.to_string())?;
        let data: Vec<TrainingExample> = (0..3)
            .map(|_| TrainingExample {
                pairs: Array2::from_shape_simple_fn((rng.random_range(1..6), width), || rng.random_range(-1.0..1.0)),
                target: (0..9).map(|_| rng.random_range(0.0..1.0)).collect(),
            })
            .collect();
        let batch: Vec<&TrainingExample> = data.iter().collect();
        let (_, grads) = batch_gradients(&model, &batch).map_err(|e| e.to_string())?;
        let loss = |m: &RelNet| dataset_loss(m, &data, 8).unwrap();
        let mid = loss(&model);
        for which in 0..2 {
            let analytic = if which == 0 { &grads.relation } else { &grads.fusion };
            for (t, tensor) in analytic.params().iter().enumerate() {
                for (i, &a) in tensor.iter().enumerate() {
                    let at = |delta: f64| {
                        let mut m = model.clone();
                        let mlp = if which == 0 { &mut m.relation } else { &mut m.fusion };
                        mlp.params_mut()[t][i] += delta;
                        loss(&m)
                    };
                    let (up, down) = (at(h), at(-h));
                    // A kink inside [-h, h] shows up as curvature.
                    if ((up - mid) - (mid - down)).abs() > 1e-3 * (up - down).abs().max(1e-12) {
                        skipped += 1;
                        continue;
                    }
                    let numeric = (up - down) / (2.0 * h);
                    let scale = a.abs().max(numeric.abs());
                    if scale < 1e-9 {
                        checked += 1;
                        continue;
                    }
                    let rel = (a - numeric).abs() / scale;
                    if rel > worst {
                        (worst, worst_grad) = (rel, a);
                    }
                    checked += 1;
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        worst < 1e-4 && secs < 60.0 && checked > 10 * skipped,
        format!("{checked} parameters checked, {skipped} at kinks, worst relative error {worst:.2e} (gradient {worst_grad:.2e}), {secs:.1} s"),
    )
}

fn target_law() -> Outcome {
    let grid = Grid::new(25, 5.0, 5.0).map_err(|e| e.to_string())?;
    let on_center = grid.cell_center(8, 16);
    let t = target_map(&on_center, &grid);
    let at_center = t.values[grid.index(8, 16)];
    // Cell (13, 16) is five 0.2 m cells away along x.
    let at_one_metre = t.values[grid.index(13, 16)];
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut argmax_ok = true;
    let mut in_range = true;
    for _ in 0..500 {
        let p = [rng.random_range(0.0..5.0), rng.random_range(0.0..5.0)];
        let t = target_map(&p, &grid);
        let best = (0..t.values.len()).max_by(|&a, &b| t.values[a].total_cmp(&t.values[b])).unwrap();
        argmax_ok &= best == grid.nearest_cell(&p);
        in_range &= t.values.iter().all(|v| *v > 0.0 && *v <= 1.0);
    }
    verdict(
        at_center == 1.0 && (at_one_metre - (-1f64).exp()).abs() <= 1e-9 && argmax_ok && in_range,
        format!("y(center) = {at_center}, y(1 m) = {at_one_metre:.12}, argmax and range hold over 500 sources"),
    )
}

fn determinism() -> Outcome {
    let cfg = DatasetConfig { master_seed: 9, train: 12, val: 4, test: 8, ..Default::default() };
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        adhoc_ssl::harness::generate_dataset(&cfg, d.path()).map_err(|e| e.to_string())?;
    }
    let mut scenes = 0;
    for split in Split::ALL {
        for i in 0..cfg.count(split) {
            let rel = format!("{}/{i:06}/scene.json", split.name());
            let a = std::fs::read(dirs[0].path().join(&rel)).map_err(|e| e.to_string())?;
            let b = std::fs::read(dirs[1].path().join(&rel)).map_err(|e| e.to_string())?;
            if a != b {
                return Err(format!("{rel} differs between runs"));
            }
            scenes += 1;
        }
    }

    let features = LocalizeConfig::default().features(FeatureKind::Slf);
    let build = |split: Split| -> Vec<TrainingExample> {
        (0..cfg.count(split))
            .map(|i| {
                let (scene, signals) = cfg.example(split, i).unwrap().unwrap();
                training_example(&scene, &signals, &features, 500.0).unwrap()
            })
            .collect()
    };
    let (train_set, val_set) = (build(Split::Train), build(Split::Val));
    let tc = TrainConfig { max_epochs: 4, rng_seed: 5, batch_size: 4, ..Default::default() };
    let run = || {
        let model = RelNet::new(RelNetSpec::new(features.clone()), 11).unwrap();
        let (_, history) = train(model, &train_set, &val_set, &tc).unwrap();
        history.epochs.iter().map(|r| (r.train_loss.to_bits(), r.val_loss.to_bits())).collect::<Vec<_>>()
    };
    let (a, b) = (run(), run());
    verdict(a == b, format!("{scenes} scene files byte-identical, {} epochs of loss history bit-identical", a.len()))
}

struct HeldOut {
    num_mics: usize,
    frame: MultichannelFrame,
    meta: MetadataVector,
}

struct Reproduction {
    model: RelNet,
    held_out: Vec<HeldOut>,
}

fn ordering_reproduction(keep: &mut Option<Reproduction>) -> Outcome {
    let cfg = DatasetConfig { master_seed: 2024, train: 2000, val: 500, test: 500, ..Default::default() };
    let lc = LocalizeConfig::default();
    let features = lc.features(FeatureKind::Slf);
    let start = Instant::now();
    let build = |split: Split| -> Vec<TrainingExample> {
        (0..cfg.count(split))
            .into_par_iter()
            .map(|i| {
                let (scene, signals) = cfg.example(split, i).unwrap().expect("feasible placement");
                assert!(cfg.train_mic_counts.contains(&scene.num_mics()));
                training_example(&scene, &signals, &features, lc.frame_ms).unwrap()
            })
            .collect()
    };
    let (train_set, val_set) = (build(Split::Train), build(Split::Val));
    let feature_secs = start.elapsed().as_secs_f64();
    let model = RelNet::new(RelNetSpec::new(features.clone()), 1).map_err(|e| e.to_string())?;
    let (model, history) = train(model, &train_set, &val_set, &TrainConfig::default()).map_err(|e| e.to_string())?;
    let train_secs = start.elapsed().as_secs_f64() - feature_secs;
    drop((train_set, val_set));

    let methods = [Method::Tdoa, Method::Slf, Method::GnnSlf];
    let per_scene: Vec<(usize, [f64; 3], Option<HeldOut>)> = (0..cfg.test)
        .into_par_iter()
        .map(|i| {
            let (scene, signals) = cfg.example(Split::Test, i).unwrap().expect("feasible placement");
            let (frame, meta) = prepare(&scene, &signals, lc.frame_ms).unwrap();
            let mut errs = [0.0; 3];
            for (k, m) in methods.into_iter().enumerate() {
                let r = localize(m, &frame, &meta, &lc, Some(&model)).unwrap();
                errs[k] = distance2d(&r.estimate, &scene.source.xy());
            }
            let m = scene.num_mics();
            let held = (i < 80).then_some(HeldOut { num_mics: m, frame, meta });
            (m, errs, held)
        })
        .collect();
    let mut sums: BTreeMap<usize, ([f64; 3], usize)> = BTreeMap::new();
    let mut held_out = Vec::new();
    for (m, errs, held) in per_scene {
        let e = sums.entry(m).or_default();
        for k in 0..3 {
            e.0[k] += errs[k];
        }
        e.1 += 1;
        held_out.extend(held);
    }
    keep.replace(Reproduction { model, held_out });

    let mut ok = true;
    let mut lines = vec![format!(
        "features {feature_secs:.0} s, training {train_secs:.0} s ({} epochs, best {})",
        history.epochs.len(),
        history.best_epoch
    )];
    ok &= feature_secs + train_secs <= 3600.0;
    for (m, (s, n)) in &sums {
        let [tdoa, slf, gnn] = s.map(|v| v / *n as f64);
        let gain = (slf - gnn) / slf;
        ok &= gnn < slf && slf < tdoa;
        if *m == 4 {
            ok &= gain >= 0.10;
        }
        lines.push(format!(
            "M={m} (n={n}): TDOA {tdoa:.3} m, SLF {slf:.3} m, GNN-SLF {gnn:.3} m, GNN gain over SLF {:.1}%",
            100.0 * gain
        ));
    }
    ok &= [4, 5, 6, 7].iter().all(|m| sums.contains_key(m));
    verdict(ok, lines.join("\n    "))
}

fn variable_mic_count(trained: Option<&Reproduction>) -> Outcome {
    let Some(rep) = trained else {
        return Err("no trained checkpoint (the reproduction run failed)".into());
    };
    let model = decode_checkpoint(&encode_checkpoint(&rep.model).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    let mut counts = BTreeMap::new();
    let mut flips = 0;
    for h in &rep.held_out {
        let out = relnet_forward(&model, &h.frame, &h.meta).map_err(|e| format!("M={}: {e}", h.num_mics))?;
        if !out.values.iter().all(|v| v.is_finite()) {
            return Err(format!("non-finite output at M={}", h.num_mics));
        }
        let m = h.num_mics;
        let order: Vec<usize> = (0..m).rev().map(|k| (k + 2) % m).collect();
        let permuted = MetadataVector::new(order.iter().map(|&k| h.meta.mics[k]).collect(), h.meta.room);
        let again = relnet_forward(&model, &h.frame.permuted(&order), &permuted).map_err(|e| e.to_string())?;
        let argmax = |v: &[f64]| (0..v.len()).max_by(|&a, &b| v[a].total_cmp(&v[b])).unwrap();
        if argmax(&out.values) != argmax(&again.values) {
            flips += 1;
        }
        *counts.entry(m).or_insert(0) += 1;
    }
    verdict(
        flips == 0 && [4, 5, 6, 7].iter().all(|m| counts.contains_key(m)),
        format!("{} scenes per M {counts:?}: all outputs finite, {flips} argmax changes under permutation", rep.held_out.len()),
    )
}

fn main() -> ExitCode {
    let mut trained = None;
    let mut failures = 0;
    let mut report = |name: &str, run: &mut dyn FnMut() -> Outcome| {
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                failures += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    };
    report("gcc-phat delay recovery", &mut gcc_delay_recovery);
    report("impulse response physics", &mut rir_physics);
    report("anechoic oracle", &mut anechoic_oracle);
    report("gradient correctness", &mut gradient_check);
    report("method ordering", &mut || ordering_reproduction(&mut trained));
    report("variable microphone count", &mut || variable_mic_count(trained.as_ref()));
    report("target map", &mut target_law);
    report("determinism", &mut determinism);
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failures} criteria failed");
        ExitCode::FAILURE
    }
}
