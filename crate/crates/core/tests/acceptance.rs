//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary. `cargo test --test acceptance -- 3 8` runs a subset.

mod common;

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use ndarray::{s, Array2};
use rand::Rng;
use rand_distr::StandardNormal;
use reactgen::attention::{biased_attention, build_mim_bias, build_vim_bias, mim_bias_at};
use reactgen::autograd::{cast, Graph, Var};
use reactgen::cli::split_sessions;
use reactgen::data::{generate_dataset, injected_lag, SynthSpec};
use reactgen::generator::ReactionDistribution;
use reactgen::losses::{appropriate_rec_loss, diversity_loss, kl_loss, rec_loss, smooth_l1, smooth_loss, HUBER_BETA};
use reactgen::metrics::{frd, tlcc};
use reactgen::pipeline::{evaluate, generate_online, replay_offline, train_stage1, train_stage2, ReactModel, TrainData, TrainOptions, TrainState};
use reactgen::{Error, ModelConfig, Session};

use common::{bits_equal, fd_check, jitter, max_abs_diff, rng, uniform};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn within(elapsed: Duration, limit_s: u64) -> (bool, String) {
    (elapsed.as_secs() < limit_s, format!("{:.1}s of {limit_s}s", elapsed.as_secs_f64()))
}

// 1

fn floor_div(a: i64, b: i64) -> i64 {
    (a as f64 / b as f64).floor() as i64
}

fn c1_bias() -> Outcome {
    let t0 = Instant::now();
    let mut checked = 0u64;
    for tq in 1..=16usize {
        for tk in 1..=32usize {
            for p in 1..=4usize {
                let b = build_vim_bias(tq, tk, p).unwrap();
                for i in 0..tq {
                    for j in 0..tk {
                        let want = if j > i { f64::NEG_INFINITY } else { -(floor_div(i as i64 - j as i64, p as i64) as f64) };
                        if b.get(i, j) != want {
                            return outcome(false, format!("VIM Tq={tq} Tk={tk} p={p} ({i},{j}): {} vs {want}", b.get(i, j)));
                        }
                        checked += 1;
                    }
                }
                for k in 1..=4usize {
                    let direct = build_mim_bias(tq, tk, k, p);
                    if tk != k * tq {
                        if !matches!(direct, Err(Error::Dimension(_))) {
                            return outcome(false, format!("MIM Tq={tq} Tk={tk} k={k} accepted a length mismatch"));
                        }
                    }
                    let b = mim_bias_at(0, tq, tk, k, p).unwrap();
                    for i in 0..tq {
                        for j in 0..tk {
                            let (ki, kp) = ((k * i) as i64, (k * p) as i64);
                            let want = if j as i64 > ki { f64::NEG_INFINITY } else { -(floor_div(ki - j as i64, kp) as f64) };
                            if b.get(i, j) != want {
                                return outcome(false, format!("MIM Tq={tq} Tk={tk} k={k} p={p} ({i},{j}): {} vs {want}", b.get(i, j)));
                            }
                            if let Ok(d) = &direct {
                                if d.get(i, j) != want {
                                    return outcome(false, format!("MIM builder Tq={tq} k={k} p={p} ({i},{j})"));
                                }
                            }
                            checked += 1;
                        }
                    }
                }
            }
        }
    }
    let (fast, t) = within(t0.elapsed(), 1);
    outcome(fast, format!("{checked} entries equal; {t}"))
}

// 2

fn causality_config() -> ModelConfig {
    let mut cfg = ModelConfig::default();
    cfg.coeff_dim = 8;
    cfg.d_a = 6;
    cfg.d = 32;
    cfg.heads = 4;
    cfg.w = 4;
    cfg.frames = 32;
    cfg.n_sessions = 2;
    cfg.sigma_d = 32.0 * 8.0;
    cfg
}

fn c2_causality() -> Outcome {
    let t0 = Instant::now();
    let cfg = causality_config();
    let model = ReactModel::new(&cfg).unwrap();
    let mut ps = model.init_params::<f64>(21);
    jitter(&mut ps, 22, 0.05);
    let ds = common::dataset(&cfg);
    let mut r = rng(23);
    let (t_len, w, k) = (cfg.frames, cfg.w, cfg.k);
    for trial in 0..100 {
        let s = &ds[trial % ds.len()];
        let sp: Array2<f64> = cast(&s.speaker_coeffs.frames);
        let au: Array2<f64> = cast(&s.speaker_audio.frames);
        let hist: Array2<f64> = cast(&s.listener_coeffs.frames);
        let t = w * r.gen_range(1..t_len / w);
        let mut sp2 = sp.clone();
        let mut au2 = au.clone();
        let mut hist2 = hist.clone();
        let scale = r.gen_range(0.1..5.0);
        sp2.slice_mut(s![t.., ..]).assign(&uniform(&mut r, t_len - t, cfg.coeff_dim, scale));
        au2.slice_mut(s![k * t.., ..]).assign(&uniform(&mut r, k * (t_len - t), cfg.d_a, scale));
        hist2.slice_mut(s![t.., ..]).assign(&uniform(&mut r, t_len - t, cfg.coeff_dim, scale));
        let seed = r.gen::<u64>();

        let a = generate_online(&model, &ps, &sp, &au, seed).unwrap();
        let b = generate_online(&model, &ps, &sp2, &au2, seed).unwrap();
        if !bits_equal(&a.coeffs.slice(s![..t, ..]).to_owned(), &b.coeffs.slice(s![..t, ..]).to_owned()) {
            return outcome(false, format!("trial {trial}: online frames <= {t} changed"));
        }

        let eps = a.trace.eps.clone();
        let run = |sp: &Array2<f64>, au: &Array2<f64>, h: &Array2<f64>| {
            let mut g = Graph::new();
            let pass = model.forward_with_history(&mut g, &ps, sp, au, h, &eps).unwrap();
            g.value(pass.listener).slice(s![..t, ..]).to_owned()
        };
        if !bits_equal(&run(&sp, &au, &hist), &run(&sp2, &au2, &hist2)) {
            return outcome(false, format!("trial {trial}: teacher-forced frames <= {t} changed"));
        }
    }
    let (fast, t) = within(t0.elapsed(), 120);
    outcome(fast, format!("100 trials bit-identical (online and teacher-forced, f64); {t}"))
}

// 3

type Loss = Box<dyn Fn(&mut Graph<f64>, &[Var]) -> Var>;

fn c3_gradients() -> Outcome {
    let t0 = Instant::now();
    let mut r = rng(31);
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    let mut fail = None;
    let mut check = |name: &'static str, inputs: Vec<Array2<f64>>, f: Loss| {
        if fail.is_some() {
            return;
        }
        if let Some((k, idx, a, n)) = fd_check(&inputs, &*f) {
            fail = Some(format!("{name}: input {k}[{idx}] analytic {a} numeric {n}"));
        }
        *counts.entry(name).or_default() += 1;
    };
    let away_from_kink = |a: &Array2<f64>, b: &Array2<f64>| (a - b).iter().all(|d| (d.abs() - HUBER_BETA).abs() > 1e-3);

    let mut n = 0;
    while n < 20 {
        let (t, d) = (r.gen_range(2..6), r.gen_range(1..4));
        let a = uniform(&mut r, t, d, 2.0);
        let b = uniform(&mut r, t, d, 2.0);
        if !away_from_kink(&a, &b) {
            continue;
        }
        check("smooth_l1", vec![a, b], Box::new(|g, v| smooth_l1(g, v[0], v[1]).unwrap()));
        n += 1;
    }

    n = 0;
    while n < 20 {
        let (t, d) = (r.gen_range(2..6), r.gen_range(1..4));
        let xs: Vec<_> = (0..4).map(|_| uniform(&mut r, t, d, 2.0)).collect();
        if !away_from_kink(&xs[0], &xs[1]) || !away_from_kink(&xs[2], &xs[3]) {
            continue;
        }
        check("rec_loss", xs, Box::new(|g, v| rec_loss(g, v[0], v[1], v[2], v[3]).unwrap()));
        n += 1;
    }

    n = 0;
    while n < 20 {
        let (t, d, m) = (r.gen_range(2..5), r.gen_range(1..4), r.gen_range(1..5));
        let xs: Vec<_> = (0..=m).map(|_| uniform(&mut r, t, d, 2.0)).collect();
        if (1..=m).any(|j| !away_from_kink(&xs[0], &xs[j])) {
            continue;
        }
        let mut values: Vec<f64> = (1..=m)
            .map(|j| {
                let mut g = Graph::new();
                let (p, q) = (g.constant(xs[0].clone()), g.constant(xs[j].clone()));
                let l = smooth_l1(&mut g, p, q).unwrap();
                g.scalar(l)
            })
            .collect();
        values.sort_by(f64::total_cmp);
        if m > 1 && values[1] - values[0] < 1e-4 {
            continue;
        }
        check(
            "appropriate_rec_loss",
            xs,
            Box::new(move |g, v| {
                let nb: Vec<(String, Var)> = v[1..].iter().enumerate().map(|(i, x)| (format!("n{i}"), *x)).collect();
                appropriate_rec_loss(g, v[0], &nb).unwrap().0
            }),
        );
        n += 1;
    }

    for _ in 0..20 {
        let (t, d, m) = (r.gen_range(2..5), r.gen_range(1..4), r.gen_range(2..5));
        let sigma_d = r.gen_range(0.5..8.0);
        let xs: Vec<_> = (0..m).map(|_| uniform(&mut r, t, d, 1.0)).collect();
        check("diversity_loss", xs, Box::new(move |g, v| diversity_loss(g, v, sigma_d).unwrap()));
    }

    for _ in 0..20 {
        let d = r.gen_range(1..8);
        let xs = vec![uniform(&mut r, 1, d, 2.0), uniform(&mut r, 1, d, 1.5)];
        check("kl_loss", xs, Box::new(|g, v| kl_loss(g, &ReactionDistribution { mu: v[0], log_sigma: v[1] })));
    }

    n = 0;
    while n < 20 {
        let (t, d) = (r.gen_range(3..8), r.gen_range(1..4));
        let a = uniform(&mut r, t, d, 2.0);
        let b = uniform(&mut r, t, d, 2.0);
        let e = &b - &a;
        let second = (2..t).all(|i| (0..d).all(|c| (e[[i, c]] - 2.0 * e[[i - 1, c]] + e[[i - 2, c]]).abs() > 1e-3));
        if !second {
            continue;
        }
        check("smooth_loss", vec![a, b], Box::new(|g, v| smooth_loss(g, v[0], v[1]).unwrap()));
        n += 1;
    }

    for inst in 0..24 {
        let heads = 1 + inst % 2;
        let d = 2 * heads;
        let tq = r.gen_range(1..5);
        let (tk, b) = match inst % 3 {
            0 => (tq, None),
            1 => {
                let tk = tq + r.gen_range(0..3);
                (tk, Some(build_vim_bias(tq, tk, r.gen_range(1..4)).unwrap()))
            }
            _ => (2 * tq, Some(build_mim_bias(tq, 2 * tq, 2, r.gen_range(1..3)).unwrap())),
        };
        let xs = vec![uniform(&mut r, tq, d, 1.0), uniform(&mut r, tk, d, 1.0), uniform(&mut r, tk, d, 1.0), uniform(&mut r, tq, d, 1.0)];
        check(
            "biased_attention",
            xs,
            Box::new(move |g, v| {
                let out = biased_attention(g, v[0], v[1], v[2], b.as_ref(), heads).unwrap();
                // project to a scalar with random weights
                let prod = g.mul(out, v[3]);
                g.sum(prod)
            }),
        );
    }

    if let Some(f) = fail {
        return outcome(false, f);
    }
    let (fast, t) = within(t0.elapsed(), 300);
    let summary: Vec<String> = counts.iter().map(|(k, v)| format!("{k} x{v}")).collect();
    let enough = counts.values().all(|&c| c >= 20);
    outcome(fast && enough, format!("{}; {t}", summary.join(", ")))
}

// 4

fn c4_oracles() -> Outcome {
    let mut r = rng(41);
    // KL against a Monte-Carlo estimate of E_q[log q(z) - log p(z)]
    let mut worst = 0.0f64;
    for case in 0..3 {
        let d = 4;
        let mu = uniform(&mut r, 1, d, 1.0);
        let ls = uniform(&mut r, 1, d, 0.5);
        let mut g = Graph::<f64>::new();
        let (m, l) = (g.constant(mu.clone()), g.constant(ls.clone()));
        let kl = kl_loss(&mut g, &ReactionDistribution { mu: m, log_sigma: l });
        let analytic = g.scalar(kl);
        let mut mc = rng(400 + case);
        let draws = 1_000_000;
        let mut acc = 0.0;
        for _ in 0..draws {
            let mut lr = 0.0;
            for c in 0..d {
                let e: f64 = mc.sample(StandardNormal);
                let sigma = ls[[0, c]].exp();
                let z = mu[[0, c]] + sigma * e;
                // log N(z; mu, sigma) - log N(z; 0, 1)
                lr += -ls[[0, c]] - 0.5 * e * e + 0.5 * z * z;
            }
            acc += lr;
        }
        let estimate = acc / draws as f64;
        let rel = (estimate - analytic).abs() / analytic.abs();
        worst = worst.max(rel);
    }
    if worst >= 0.02 {
        return outcome(false, format!("KL Monte-Carlo relative error {worst:.4}"));
    }

    // diversity kernel at squared distance sigma_d
    let mut div_err = 0.0f64;
    for (rows, cols, fill, sigma_d) in [(1, 1, 2.0, 4.0), (64, 56, 1.0, 64.0 * 56.0), (8, 4, 0.5, 8.0)] {
        let mut g = Graph::<f64>::new();
        let a = g.constant(Array2::zeros((rows, cols)));
        let b = g.constant(Array2::from_elem((rows, cols), fill));
        let v = diversity_loss(&mut g, &[a, b], sigma_d).unwrap();
        div_err = div_err.max((g.scalar(v) - (-1.0f64).exp()).abs());
    }
    if div_err >= 1e-9 {
        return outcome(false, format!("diversity at sigma_d off by {div_err:e}"));
    }

    // minimum over neighbors
    for case in 0..100 {
        let (t, d, m) = (r.gen_range(1..6), r.gen_range(1..4), r.gen_range(1..7));
        let pred = uniform(&mut r, t, d, 3.0);
        let nbs: Vec<Array2<f64>> = (0..m).map(|_| uniform(&mut r, t, d, 3.0)).collect();
        let brute = nbs
            .iter()
            .map(|n| {
                let mut g = Graph::new();
                let (p, q) = (g.constant(pred.clone()), g.constant(n.clone()));
                let l = smooth_l1(&mut g, p, q).unwrap();
                g.scalar(l)
            })
            .fold(f64::INFINITY, f64::min);
        let mut g = Graph::new();
        let p = g.constant(pred.clone());
        let nb: Vec<(String, Var)> = nbs.iter().enumerate().map(|(i, n)| (format!("n{i}"), g.constant(n.clone()))).collect();
        let (l, _) = appropriate_rec_loss(&mut g, p, &nb).unwrap();
        if g.scalar(l) != brute {
            return outcome(false, format!("case {case}: appropriate loss {} vs brute-force {brute}", g.scalar(l)));
        }
    }
    outcome(true, format!("KL rel err {worst:.4}; diversity err {div_err:.1e}; 100 min-over-neighbor cases exact"))
}

// 5

fn c5_overfit() -> Outcome {
    let t0 = Instant::now();
    let mut cfg = ModelConfig::default();
    cfg.n_sessions = 1;
    cfg.n_classes = 1;
    cfg.epochs_stage1 = 2000;
    assert_eq!((cfg.frames, cfg.w, cfg.d), (64, 8, 128));
    let ds = common::dataset(&cfg);
    let model = ReactModel::new(&cfg).unwrap();
    let data = TrainData::<f32>::new(&ds).unwrap();
    let mut state = TrainState::new(model.init_params::<f32>(cfg.seed), cfg.seed);
    let mut reached = None;
    let mut last = f64::NAN;
    while reached.is_none() && state.step < 2000 {
        let opts = TrainOptions { max_steps: Some(state.step + 50), workers: 1 };
        state = train_stage1(&model, &data, state, &opts, &mut |r| {
            last = r.loss.rec;
            if r.loss.rec < 0.01 && reached.is_none() {
                reached = Some(r.step);
            }
        })
        .unwrap();
    }
    let (fast, t) = within(t0.elapsed(), 600);
    match reached {
        Some(step) => outcome(fast, format!("rec < 0.01 at step {step}; {t}")),
        None => outcome(false, format!("rec {last:.4} after 2000 steps; {t}")),
    }
}

// 6 and 7

const DIV_STAGE1_EPOCHS: usize = 30;
const DIV_STAGE2_EPOCHS: usize = 15;
const DIV_SAMPLES: usize = 3;

struct DivRuns {
    with_div: (f64, f64),
    without_div: (f64, f64),
    class_ok: usize,
    held_out: usize,
    elapsed: Duration,
}

fn class_check(sess: &Session, samples: &[Array2<f32>], pool: &[Session]) -> bool {
    let own: Vec<_> = pool.iter().filter(|x| sess.neighbor_ids.contains(&x.id)).map(|x| x.listener_coeffs.frames.view()).collect();
    let other: Vec<_> = pool.iter().filter(|x| !sess.neighbor_ids.contains(&x.id)).map(|x| x.listener_coeffs.frames.view()).collect();
    let mean = |set: &[ndarray::ArrayView2<f32>]| samples.iter().map(|m| frd(m.view(), set).unwrap()).sum::<f64>() / samples.len() as f64;
    mean(&own) < mean(&other)
}

fn diversity_runs() -> DivRuns {
    let t0 = Instant::now();
    let mut cfg = ModelConfig::default();
    cfg.epochs_stage1 = DIV_STAGE1_EPOCHS;
    cfg.epochs_stage2 = DIV_STAGE2_EPOCHS;
    assert_eq!((cfg.n_sessions, cfg.n_classes), (64, 2));
    let ds = generate_dataset(&SynthSpec::from_config(&cfg), &cfg).unwrap();
    let (train, test) = split_sessions(&cfg, &ds);
    let model = ReactModel::new(&cfg).unwrap();
    let data = TrainData::<f32>::new(&train).unwrap();
    let opts = TrainOptions::default();
    let s1 = train_stage1(&model, &data, TrainState::new(model.init_params::<f32>(cfg.seed), cfg.seed), &opts, &mut |_| {}).unwrap();
    let refs: Vec<&Session> = test.iter().collect();
    let run = |lambda_div: f64| {
        let mut c = cfg.clone();
        c.lambda_div = lambda_div;
        let m = ReactModel::new(&c).unwrap();
        let s2 = train_stage2(&m, &data, s1.clone(), &opts, &mut |_| {}).unwrap();
        let (rep, samples) = evaluate(&m, &s2.params, &refs, &ds, DIV_SAMPLES, c.seed, 1).unwrap();
        ((rep.s_mse, rep.frd), samples)
    };
    let (with_div, samples) = run(cfg.lambda_div);
    let (without_div, _) = run(0.0);
    let class_ok = test.iter().zip(&samples).filter(|(s, smp)| class_check(s, smp, &ds)).count();
    DivRuns { with_div, without_div, class_ok, held_out: test.len(), elapsed: t0.elapsed() }
}

fn c6_diversity(r: &DivRuns) -> Outcome {
    let ((s_on, frd_on), (s_off, _)) = (r.with_div, r.without_div);
    let ratio = s_on / s_off;
    let (fast, t) = within(r.elapsed, 1800);
    let pass = ratio >= 10.0 && s_off < 0.01 * frd_on && fast;
    outcome(pass, format!("S-MSE {s_on:.5} vs {s_off:.5} (x{ratio:.1}); FRD {frd_on:.4}; {t}"))
}

fn c7_appropriateness(r: &DivRuns) -> Outcome {
    let frac = r.class_ok as f64 / r.held_out as f64;
    outcome(frac >= 0.8, format!("{}/{} held-out sessions closer to their own class", r.class_ok, r.held_out))
}

// 8

fn c8_sync() -> Outcome {
    let base = ModelConfig::default();
    for lag in 0..=base.w {
        let mut cfg = base.clone();
        cfg.noise_scale = 0.0;
        cfg.lag_min = lag;
        cfg.lag_max = lag;
        cfg.n_sessions = 4;
        let spec = SynthSpec::from_config(&cfg);
        let ds = generate_dataset(&spec, &cfg).unwrap();
        for (i, s) in ds.iter().enumerate() {
            assert_eq!(injected_lag(&spec, i), lag);
            let got = tlcc(s.listener_coeffs.frames.view(), s.speaker_coeffs.frames.view(), cfg.max_lag()).unwrap();
            if got != lag as f64 {
                return outcome(false, format!("session {}: tlcc {got} for injected lag {lag}", s.id));
            }
        }
    }
    let model = ReactModel::new(&base).unwrap();
    let mut ps = model.init_params::<f32>(81);
    jitter(&mut ps, 82, 0.05);
    let mut cfg = base.clone();
    cfg.n_sessions = 4;
    let mut worst = 0.0f64;
    for (i, s) in common::dataset(&cfg).iter().enumerate() {
        let gen = generate_online(&model, &ps, &s.speaker_coeffs.frames, &s.speaker_audio.frames, i as u64).unwrap();
        let off = replay_offline(&model, &ps, &s.speaker_coeffs.frames, &s.speaker_audio.frames, &gen).unwrap();
        worst = worst.max(max_abs_diff(&gen.coeffs, &off));
    }
    outcome(worst <= 1e-5, format!("lags 0..={} recovered exactly; online/offline max diff {worst:.2e} at f32", base.w))
}

// 9

const CLI_CONFIG: &str = "D = 6\nd = 16\nd_a = 4\nheads = 2\nlayers = 1\nT = 16\nw = 4\nn_sessions = 8\nepochs_stage1 = 2\nepochs_stage2 = 1\nbatch_size = 4\nsigma_d = 96.0\nseed = 5\n";

fn cli_run(root: &Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let cfg = root.join("run.toml");
    std::fs::write(&cfg, CLI_CONFIG).unwrap();
    let out = root.join("out");
    let steps: &[&[&str]] = &[
        &["synth"],
        &["train", "--stage", "1"],
        &["train", "--stage", "2"],
        &["generate", "--session", "s0002", "--samples", "2", "--seed", "9"],
        &["evaluate"],
        &["plot", "--session", "s0002"],
        &["ablate", "--disable", "mim"],
        &["--workers", "2", "ablate", "--disable", "div"],
    ];
    for args in steps {
        let o = Command::new(env!("CARGO_BIN_EXE_reactgen"))
            .arg("--config")
            .arg(&cfg)
            .arg("--out")
            .arg(&out)
            .args(*args)
            .env_remove("REACTGEN_SEED")
            .output()
            .unwrap();
        if !o.status.success() {
            return Err(format!("{args:?} failed: {}", String::from_utf8_lossy(&o.stderr)));
        }
    }
    let mut files = BTreeMap::new();
    collect(&out, &out, &mut files);
    Ok(files)
}

fn collect(root: &Path, dir: &Path, files: &mut BTreeMap<String, Vec<u8>>) {
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            collect(root, &p, files);
        } else {
            files.insert(p.strip_prefix(root).unwrap().display().to_string(), std::fs::read(&p).unwrap());
        }
    }
}

fn c9_determinism() -> Outcome {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (fa, fb) = match (cli_run(a.path()), cli_run(b.path())) {
        (Ok(x), Ok(y)) => (x, y),
        (Err(e), _) | (_, Err(e)) => return outcome(false, e),
    };
    if fa.keys().ne(fb.keys()) {
        return outcome(false, "runs wrote different file sets");
    }
    for (name, bytes) in &fa {
        if fb[name] != *bytes {
            return outcome(false, format!("{name} differs between runs"));
        }
    }
    outcome(true, format!("{} files bit-identical across two runs of every subcommand", fa.len()))
}

fn main() {
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let want = |n: u32| selected.is_empty() || selected.contains(&n);
    let mut results: Vec<(u32, &str, Outcome)> = vec![];
    let mut record = |n: u32, name: &'static str, f: &dyn Fn() -> Outcome| {
        if want(n) {
            let o = std::panic::catch_unwind(std::panic::AssertUnwindSafe(f)).unwrap_or_else(|e| {
                let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
                outcome(false, format!("panicked: {}", msg.unwrap_or_default()))
            });
            println!("criterion {n} {name}: {} ({})", if o.pass { "PASS" } else { "FAIL" }, o.detail);
            results.push((n, name, o));
        }
    };
    record(1, "bias correctness", &c1_bias);
    record(2, "causality", &c2_causality);
    record(3, "gradients", &c3_gradients);
    record(4, "loss oracles", &c4_oracles);
    record(5, "overfit", &c5_overfit);
    if want(6) || want(7) {
        match std::panic::catch_unwind(diversity_runs) {
            Ok(runs) => {
                record(6, "diversity ablation", &|| c6_diversity(&runs));
                record(7, "appropriateness", &|| c7_appropriateness(&runs));
            }
            Err(_) => {
                record(6, "diversity ablation", &|| outcome(false, "training runs panicked"));
                record(7, "appropriateness", &|| outcome(false, "training runs panicked"));
            }
        }
    }
    record(8, "synchrony", &c8_sync);
    record(9, "determinism", &c9_determinism);
    let failed: Vec<u32> = results.iter().filter(|(_, _, o)| !o.pass).map(|(n, _, _)| *n).collect();
    println!("acceptance: {}/{} passed", results.len() - failed.len(), results.len());
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
