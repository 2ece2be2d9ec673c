//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails.

use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spikegrad::arch::{count_parameters, parse_architecture};
use spikegrad::data::{read_nmnist_bin, write_nmnist_bin, EventRecord};
use spikegrad::kernels::{
    build_response_kernel, temporal_convolve, temporal_correlate, KernelVector,
};
use spikegrad::loss::{
    probability_estimate, spike_rate_loss, spikemax_g_loss, spikemax_loss, spikemax_s_loss,
    van_rossum_loss, windowed_counts, GradientForm, LossConfig, LossKind, LossResult,
};
use spikegrad::network::{Network, Weights};
use spikegrad::neuron::{forward, NeuronParams, SrmDynamics};
use spikegrad::tensor::{DenseTensor, SpikeTensor, TimeGrid};
use spikegrad_cli::presets::preset;
use spikegrad_cli::{cmd_train, RunConfig};

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

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(b));
    if scale == 0.0 {
        norm(&diff)
    } else {
        norm(&diff) / scale
    }
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

// 1 -------------------------------------------------------------------------

const CLASSES: usize = 4;
const BINS: usize = 20;

fn loss_cfg(kind: LossKind) -> LossConfig {
    match kind {
        LossKind::Spikemax => LossConfig::spikemax(6).with_gradient(GradientForm::Exact),
        LossKind::SpikemaxG => LossConfig::new(kind).with_gradient(GradientForm::Exact),
        LossKind::SpikemaxS => LossConfig::new(kind),
        LossKind::SpikeRate => LossConfig::spike_rate(0.2, 0.04),
        LossKind::VanRossum => LossConfig::van_rossum(2.0),
    }
}

fn eval_loss(kind: LossKind, data: &[f64], target: usize, goal: &SpikeTensor) -> LossResult {
    let out = SpikeTensor::from_vec(&[CLASSES], BINS, data.to_vec()).unwrap();
    let cfg = loss_cfg(kind);
    match kind {
        LossKind::Spikemax => spikemax_loss(&out, target, &cfg),
        LossKind::SpikemaxG => spikemax_g_loss(&out, target, &cfg),
        LossKind::SpikemaxS => spikemax_s_loss(&out, target, &cfg),
        LossKind::SpikeRate => spike_rate_loss(&out, target, &cfg),
        LossKind::VanRossum => {
            van_rossum_loss(&out, goal, &cfg, &TimeGrid::new(1.0, BINS).unwrap())
        }
    }
    .unwrap()
}

fn gradient_fidelity() -> Verdict {
    let start = Instant::now();
    let mut worst = vec![0.0f64; LossKind::ALL.len()];
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<f64> = (0..CLASSES * BINS)
            .map(|_| rng.gen_range(0.05..1.0))
            .collect();
        let goal = SpikeTensor::from_vec(
            &[CLASSES],
            BINS,
            (0..CLASSES * BINS)
                .map(|_| if rng.gen_bool(0.2) { 1.0 } else { 0.0 })
                .collect(),
        )
        .unwrap();
        let target = rng.gen_range(0..CLASSES);
        for (k, kind) in LossKind::ALL.into_iter().enumerate() {
            let analytic = eval_loss(kind, &data, target, &goal).grad_spikes.into_vec();
            let h = 1e-6;
            let mut x = data.clone();
            let fd: Vec<f64> = (0..x.len())
                .map(|i| {
                    let orig = x[i];
                    x[i] = orig + h;
                    let plus = eval_loss(kind, &x, target, &goal).value;
                    x[i] = orig - h;
                    let minus = eval_loss(kind, &x, target, &goal).value;
                    x[i] = orig;
                    (plus - minus) / (2.0 * h)
                })
                .collect();
            worst[k] = worst[k].max(rel_err(&analytic, &fd));
        }
    }
    let elapsed = start.elapsed();
    let max = worst.iter().cloned().fold(0.0, f64::max);
    let per_loss: Vec<String> = LossKind::ALL
        .iter()
        .zip(&worst)
        .map(|(k, e)| format!("{} {e:.1e}", k.name()))
        .collect();
    verdict(
        max < 1e-5 && elapsed < Duration::from_secs(10),
        format!(
            "max rel err {max:.2e} ({}), {:.2}s",
            per_loss.join(", "),
            secs(elapsed)
        ),
    )
}

// 2 -------------------------------------------------------------------------

fn softmax_identity() -> Verdict {
    let mut worst = 0.0f64;
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let classes = rng.gen_range(2..8);
        let steps = rng.gen_range(1..30);
        let rows: Vec<Vec<f64>> = (0..classes)
            .map(|_| {
                (0..steps)
                    .map(|_| if rng.gen_bool(0.3) { 1.0 } else { 0.0 })
                    .collect()
            })
            .collect();
        let target = rng.gen_range(0..classes);
        let out = SpikeTensor::from_rows(&rows).unwrap();
        let grad = spikemax_s_loss(&out, target, &LossConfig::new(LossKind::SpikemaxS))
            .unwrap()
            .grad_spikes;
        let counts: Vec<f64> = rows.iter().map(|r| r.iter().sum()).collect();
        let peak = counts.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = counts.iter().map(|c| (c - peak).exp()).sum();
        for i in 0..classes {
            let p = (counts[i] - peak).exp() / z;
            let y = if i == target { 1.0 } else { 0.0 };
            for t in 0..steps {
                worst = worst.max((grad.row(i)[t] - (p - y)).abs());
            }
        }
    }
    verdict(worst <= 1e-12, format!("max |grad - (p - y)| {worst:.1e}"))
}

// 3 -------------------------------------------------------------------------

fn adjoint_identity() -> Verdict {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for seed in 0..1000u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let units = rng.gen_range(1..6);
        let steps = rng.gen_range(1..80);
        let kernel = if rng.gen_bool(0.5) {
            let grid = TimeGrid::new(rng.gen_range(0.25..2.0), steps).unwrap();
            build_response_kernel(rng.gen_range(0.5..8.0), &grid, 0.01).unwrap()
        } else {
            KernelVector::from_samples(
                (0..rng.gen_range(1..20))
                    .map(|_| rng.gen_range(-2.0..2.0))
                    .collect(),
            )
            .unwrap()
        };
        let x = SpikeTensor::from_vec(
            &[units],
            steps,
            (0..units * steps)
                .map(|_| rng.gen_range(-1.0..1.0))
                .collect(),
        )
        .unwrap();
        let g = DenseTensor::from_vec(
            &[units, steps],
            (0..units * steps)
                .map(|_| rng.gen_range(-1.0..1.0))
                .collect(),
        )
        .unwrap();
        let lhs = temporal_convolve(&kernel, &x).dot(&g).unwrap();
        let rhs = x.to_dense().dot(&temporal_correlate(&kernel, &g)).unwrap();
        worst = worst.max((lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(1e-300));
    }
    let elapsed = start.elapsed();
    verdict(
        worst <= 1e-9 && elapsed < Duration::from_secs(5),
        format!(
            "max rel err {worst:.1e} over 1000 instances, {:.2}s",
            secs(elapsed)
        ),
    )
}

// 4 -------------------------------------------------------------------------

/// Scalar simulation, every membrane value recomputed from the histories.
fn naive_layer(
    w: &[Vec<f64>],
    input: &[Vec<f64>],
    eps: &[f64],
    nu: &[f64],
    theta: f64,
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let steps = input[0].len();
    let mut u = vec![vec![0.0; steps]; w.len()];
    let mut s = vec![vec![0.0; steps]; w.len()];
    for t in 0..steps {
        for i in 0..w.len() {
            let mut drive = 0.0;
            for (j, row) in input.iter().enumerate() {
                let mut psp = 0.0;
                for k in 0..eps.len().min(t + 1) {
                    psp += eps[k] * row[t - k];
                }
                drive += w[i][j] * psp;
            }
            let mut refr = 0.0;
            for past in 0..t {
                if s[i][past] == 1.0 && t - past < nu.len() {
                    refr += nu[t - past];
                }
            }
            u[i][t] = drive + refr;
            if u[i][t] >= theta {
                s[i][t] = 1.0;
            }
        }
    }
    (u, s)
}

fn srm_oracle() -> Verdict {
    let mut mismatches = 0;
    let mut spikes = 0.0;
    for n_out in [1usize, 10] {
        for seed in 0..100u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed * 31 + n_out as u64);
            let n_in = rng.gen_range(1..=8);
            let steps = rng.gen_range(5..=60);
            let params = NeuronParams::new(
                rng.gen_range(2.0..15.0),
                rng.gen_range(0.5..4.0),
                rng.gen_range(0.5..4.0),
            );
            let grid = TimeGrid::new(rng.gen_range(0.5..1.5), steps).unwrap();
            let dynamics = SrmDynamics::new(params, &grid).unwrap();
            let density = rng.gen_range(0.05..0.5);
            let input: Vec<Vec<f64>> = (0..n_in)
                .map(|_| {
                    (0..steps)
                        .map(|_| if rng.gen_bool(density) { 1.0 } else { 0.0 })
                        .collect()
                })
                .collect();
            let w: Vec<Vec<f64>> = (0..n_out)
                .map(|_| (0..n_in).map(|_| rng.gen_range(-10.0..25.0)).collect())
                .collect();
            let (u, s) = naive_layer(
                &w,
                &input,
                dynamics.response.samples(),
                dynamics.refractory.samples(),
                params.theta,
            );
            let weights = DenseTensor::from_vec(&[n_out, n_in], w.concat()).unwrap();
            let act = forward(
                &weights,
                &SpikeTensor::from_rows(&input).unwrap(),
                &dynamics,
            )
            .unwrap();
            let same = (0..n_out).all(|i| {
                act.spikes.row(i) == s[i].as_slice()
                    && act
                        .membrane
                        .row(i)
                        .iter()
                        .zip(&u[i])
                        .all(|(a, b)| a.to_bits() == b.to_bits())
            });
            if !same {
                mismatches += 1;
            }
            spikes += act.spikes.total();
        }
    }
    verdict(
        mismatches == 0,
        format!("{mismatches} of 200 instances differ, {spikes} output spikes compared"),
    )
}

// 5 -------------------------------------------------------------------------

fn smoothed_network() -> Verdict {
    let steps = 15;
    let grid = TimeGrid::new(1.0, steps).unwrap();
    let params = NeuronParams::new(1.0, 2.0, 2.0);
    let mut worst = 0.0f64;
    let mut checked = 0;
    for seed in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = parse_architecture("6-5-3")
            .unwrap()
            .with_neuron_params(params);
        let net = Network::new(spec, grid).unwrap().relaxed(0.5);
        let mut w = net.zero_weights();
        for v in w.iter_mut() {
            *v = rng.gen_range(-0.6..1.0);
        }
        let input = SpikeTensor::from_vec(
            &[6],
            steps,
            (0..6 * steps)
                .map(|_| if rng.gen_bool(0.3) { 1.0 } else { 0.0 })
                .collect(),
        )
        .unwrap();
        let probe: Vec<f64> = (0..3 * steps).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let loss = |w: &Weights| -> f64 {
            let acts = net.forward(w, &input).unwrap();
            acts.last()
                .unwrap()
                .spikes
                .data()
                .iter()
                .zip(&probe)
                .map(|(s, g)| s * g + 0.5 * s * s)
                .sum()
        };
        let acts = net.forward(&w, &input).unwrap();
        let grad_out: Vec<f64> = acts
            .last()
            .unwrap()
            .spikes
            .data()
            .iter()
            .zip(&probe)
            .map(|(s, g)| s + g)
            .collect();
        let grads = net
            .backward(
                &w,
                &acts,
                &DenseTensor::from_vec(&[3, steps], grad_out).unwrap(),
            )
            .unwrap();
        let h = 1e-6;
        for l in [1usize, 2] {
            for i in 0..w.layers[l].len() {
                let mut wp = w.clone();
                wp.layers[l][i] += h;
                let mut wm = w.clone();
                wm.layers[l][i] -= h;
                let fd = (loss(&wp) - loss(&wm)) / (2.0 * h);
                let an = grads.layers[l][i];
                worst = worst.max((fd - an).abs() / fd.abs().max(an.abs()).max(1e-8));
                checked += 1;
            }
        }
    }
    verdict(
        worst < 1e-4,
        format!("max rel err {worst:.1e} over {checked} weights"),
    )
}

// 6 -------------------------------------------------------------------------

fn parameter_counts() -> Verdict {
    let expected = [
        ("34x34x2-16c5-2a-32c3-2a-64c3-512-10", 2_171_728usize),
        ("128x128x2-4a-16c5-2a-32c3-2a-512-11", 1_068_368),
        ("64-256-256-11", 84_736),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (arch, want) in expected {
        let got = count_parameters(&parse_architecture(arch).unwrap());
        pass &= got == want;
        parts.push(format!("{arch}: {got} (expected {want})"));
    }
    verdict(pass, parts.join("; "))
}

// 7 -------------------------------------------------------------------------

fn desk_scale_learning(root: &Path) -> Verdict {
    let p = preset("synthetic-smoke").unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    for kind in [
        LossKind::Spikemax,
        LossKind::SpikemaxG,
        LossKind::SpikemaxS,
        LossKind::SpikeRate,
    ] {
        let mut good = 0;
        let mut runs = Vec::new();
        for seed in 1..=5u64 {
            let mut cfg: RunConfig = p.with_loss(kind);
            cfg.seed = seed;
            cfg.output_dir = root.join(format!("{}-{seed}", kind.name()));
            let summary = cmd_train(&cfg, true).unwrap();
            let acc = summary.final_test_accuracy().unwrap_or(0.0);
            let ok = acc >= 0.95
                && summary.history.len() <= 50
                && summary.elapsed < Duration::from_secs(180);
            good += ok as usize;
            runs.push(format!(
                "{}{}@{}",
                if ok { "" } else { "x" },
                acc,
                summary.history.len()
            ));
        }
        pass &= good >= 4;
        parts.push(format!("{} {good}/5 [{}]", kind.name(), runs.join(" ")));
    }
    verdict(pass, parts.join("; "))
}

// 8 -------------------------------------------------------------------------

fn normalization_invariants() -> Verdict {
    let mut worst_p = 0.0f64;
    let mut worst_g = 0.0f64;
    let mut worst_s = 0.0f64;
    for seed in 0..500u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let classes = rng.gen_range(2..8);
        let steps = rng.gen_range(1..40);
        let density = rng.gen_range(0.0..1.0);
        let rows: Vec<Vec<f64>> = (0..classes)
            .map(|_| {
                (0..steps)
                    .map(|_| if rng.gen_bool(density) { 1.0 } else { 0.0 })
                    .collect()
            })
            .collect();
        let out = SpikeTensor::from_rows(&rows).unwrap();
        let target = rng.gen_range(0..classes);
        let window = rng.gen_range(1..=steps);
        let p = probability_estimate(&windowed_counts(&out, window), 1e-9);
        for t in 0..steps {
            let sum: f64 = (0..classes).map(|i| p.row(i)[t]).sum();
            worst_p = worst_p.max((sum - 1.0).abs());
        }
        let column_sums = |g: &DenseTensor| {
            (0..steps)
                .map(|t| (0..classes).map(|i| g.row(i)[t]).sum::<f64>().abs())
                .fold(0.0, f64::max)
        };
        let g = spikemax_g_loss(&out, target, &LossConfig::new(LossKind::SpikemaxG))
            .unwrap()
            .grad_spikes;
        worst_g = worst_g.max(column_sums(&g));
        let s = spikemax_s_loss(&out, target, &LossConfig::new(LossKind::SpikemaxS))
            .unwrap()
            .grad_spikes;
        worst_s = worst_s.max(column_sums(&s));
    }
    verdict(
        worst_p <= 1e-9 && worst_g <= 1e-9 && worst_s <= 1e-9,
        format!(
            "max |sum p - 1| {worst_p:.1e}; max |sum grad| spikemax_g {worst_g:.1e}, spikemax_s {worst_s:.1e}"
        ),
    )
}

// 9 -------------------------------------------------------------------------

fn determinism(root: &Path) -> Verdict {
    let run = |name: &str| {
        let mut cfg = preset("synthetic-smoke").unwrap().config();
        cfg.seed = 11;
        cfg.checkpoint_every = 1;
        cfg.output_dir = root.join(name);
        cmd_train(&cfg, true).unwrap();
        cfg.output_dir
    };
    let a = run("a");
    let b = run("b");
    let mut files: Vec<String> = fs::read_dir(&a)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".spk") || n == "metrics.csv")
        .collect();
    files.sort();
    let differing: Vec<&String> = files
        .iter()
        .filter(|f| fs::read(a.join(f)).ok() != fs::read(b.join(f)).ok())
        .collect();
    verdict(
        differing.is_empty() && files.len() > 2,
        format!("{} files compared, {} differ", files.len(), differing.len()),
    )
}

// 10 ------------------------------------------------------------------------

fn nmnist_codec() -> Verdict {
    let mut failures = 0;
    for seed in 0..200u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(0..300);
        let mut events: Vec<EventRecord> = (0..n)
            .map(|_| EventRecord {
                t_us: rng.gen_range(0..1u64 << 23),
                x: rng.gen_range(0..34),
                y: rng.gen_range(0..34),
                p: rng.gen_range(0..2),
            })
            .collect();
        events.sort_by_key(|e| e.t_us);
        let bytes = write_nmnist_bin(&events).unwrap();
        if read_nmnist_bin(&bytes).ok().as_ref() != Some(&events) {
            failures += 1;
        }
        for cut in 1..5.min(bytes.len() + 1) {
            if read_nmnist_bin(&bytes[..bytes.len() - cut]).is_ok() {
                failures += 1;
            }
        }
    }
    verdict(failures == 0, format!("200 records, {failures} failures"))
}

fn main() {
    let tmp = tempfile::tempdir().expect("temp dir");
    let criteria: Vec<(&str, Box<dyn Fn() -> Verdict>)> = vec![
        ("gradient fidelity", Box::new(gradient_fidelity)),
        ("spikemax_s gradient identity", Box::new(softmax_identity)),
        ("adjoint identity", Box::new(adjoint_identity)),
        ("SRM oracle equivalence", Box::new(srm_oracle)),
        (
            "smoothed-network gradient check",
            Box::new(smoothed_network),
        ),
        ("parameter counts", Box::new(parameter_counts)),
        (
            "desk-scale learning",
            Box::new(|| desk_scale_learning(&tmp.path().join("learn"))),
        ),
        (
            "normalization and zero-sum invariants",
            Box::new(normalization_invariants),
        ),
        (
            "determinism",
            Box::new(|| determinism(&tmp.path().join("determinism"))),
        ),
        ("N-MNIST codec", Box::new(nmnist_codec)),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let v = check();
        failed += !v.pass as usize;
        println!(
            "criterion {:>2} {}: {} ({})",
            i + 1,
            if v.pass { "PASS" } else { "FAIL" },
            name,
            v.detail
        );
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
