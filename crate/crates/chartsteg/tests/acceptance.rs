//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (`harness = false`). Set `ACCEPTANCE_ONLY=1,3,7` to
//! run a subset and `ACCEPTANCE_STRICT=1` to exit non-zero on any FAIL.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use chartsteg::bundle::{read_json, ChartData, InfoFile};
use chartsteg::image_io::read_rgb;
use chartsteg::pipeline::{encode, reveal_all, EncodeRequest};
use chartsteg::qr::{decode_qr_payload, encode_qr_payload, flip_modules, SYMBOL_CHARS};
use chartsteg::train::{read_log, LogRecord};
use chartsteg_core::dtoi::{
    discrete_images, dtoi_continuous, dtoi_discrete_fitted, inverse_dtoi_continuous, inverse_dtoi_discrete, Plane,
};
use chartsteg_core::metrics::{bpp, psnr, rmse, ssim, tra, PsnrMode};
use chartsteg_core::stegnet::wavelet::{depth_to_space, dwt, iwt, space_to_depth};
use chartsteg_core::stegnet::{Hyper, SecretStack, StegModel, Tensor};
use chartsteg_core::trainer::synth::{perlin, scatter};
use chartsteg_core::trainer::LossWeights;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Criterion = (u32, &'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn work_dir(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance").join(name);
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_chartsteg"))
}

// 1 ------------------------------------------------------------------------

fn random_set<R: Rng>(n: usize, rng: &mut R) -> Vec<(f64, f64)> {
    match rng.gen_range(0..3) {
        0 => scatter(n, rng),
        // coarse lattice: many ties in both coordinates
        1 => (0..n)
            .map(|_| (f64::from(rng.gen_range(0..20)), f64::from(rng.gen_range(-5..5)) * 0.25))
            .collect(),
        _ => (0..n).map(|_| (rng.gen_range(-1e4..1e4), rng.gen_range(1e-3..2e-3))).collect(),
    }
}

fn dtoi_exactness() -> Outcome {
    let mut r = rng(1);
    let mut worst_float = 0.0f64;
    let mut worst_quant = 0.0f64;
    for _ in 0..1000 {
        let n = r.gen_range(1..=10_000);
        let k = r.gen_range(0..=3);
        let pts = random_set(n, &mut r);
        let (channels, plan) = dtoi_discrete_fitted(&pts, (512, 512), k).unwrap();
        let mut want = pts.clone();
        let mut got = inverse_dtoi_discrete(&channels, &plan).unwrap();
        let quantized: Vec<Plane> = channels.iter().map(Plane::quantized).collect();
        let mut got_q = inverse_dtoi_discrete(&quantized, &plan).unwrap();
        let key = |a: &(f64, f64), b: &(f64, f64)| a.partial_cmp(b).unwrap();
        want.sort_by(key);
        got.sort_by(key);
        got_q.sort_by(key);
        let (xs, ys) = (span(pts.iter().map(|p| p.0)), span(pts.iter().map(|p| p.1)));
        let scale = |v: (f64, f64)| v.0.abs().max(v.1.abs()).max(f64::MIN_POSITIVE);
        for (w, g) in want.iter().zip(&got) {
            worst_float = worst_float.max((w.0 - g.0).abs() / scale(xs)).max((w.1 - g.1).abs() / scale(ys));
        }
        // quantization reorders ties differently, so compare coordinate multisets
        for (axis, s) in [(0usize, xs), (1, ys)] {
            let pick = |v: &[(f64, f64)]| {
                let mut c: Vec<f64> = v.iter().map(|p| if axis == 0 { p.0 } else { p.1 }).collect();
                c.sort_by(|a, b| a.partial_cmp(b).unwrap());
                c
            };
            let range = (s.1 - s.0).max(f64::MIN_POSITIVE);
            for (w, g) in pick(&want).iter().zip(pick(&got_q).iter()) {
                worst_quant = worst_quant.max((w - g).abs() / range);
            }
        }
    }
    for _ in 0..100 {
        let count = r.gen_range(1..=3);
        let (h, w) = (r.gen_range(8..=200), r.gen_range(8..=200));
        let planes: Vec<Plane> = (0..count)
            .map(|_| {
                let (a, b) = (r.gen_range(0.1..1e3), r.gen_range(-1e3..1e3));
                let v = perlin(h, w, 3, &mut r).into_iter().map(|v| v * a + b).collect();
                Plane::from_vec(h, w, v).unwrap()
            })
            .collect();
        let (channels, plan) = dtoi_continuous(&planes, (256, 256)).unwrap();
        let back = inverse_dtoi_continuous(&channels, &plan).unwrap();
        let quantized: Vec<Plane> = channels.iter().map(Plane::quantized).collect();
        let back_q = inverse_dtoi_continuous(&quantized, &plan).unwrap();
        for ((p, b), q) in planes.iter().zip(&back).zip(&back_q) {
            let s = span(p.data.iter().copied());
            let range = (s.1 - s.0).max(f64::MIN_POSITIVE);
            for ((v, bv), qv) in p.data.iter().zip(&b.data).zip(&q.data) {
                worst_float = worst_float.max((v - bv).abs() / s.0.abs().max(s.1.abs()));
                worst_quant = worst_quant.max((v - qv).abs() / range);
            }
        }
    }
    // float path: a few ulps of the coordinate magnitude
    let float_ok = worst_float <= 8.0 * f64::EPSILON;
    let quant_ok = worst_quant <= 1.0 / 255.0;
    outcome(
        float_ok && quant_ok,
        format!(
            "1000 discrete + 100 continuous; float error {:.2} ulp of max|v| (bound 8), 8-bit error {:.5} of range (bound {:.5})",
            worst_float / f64::EPSILON,
            worst_quant,
            1.0 / 255.0
        ),
    )
}

fn span(v: impl Iterator<Item = f64>) -> (f64, f64) {
    v.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)))
}

// 2 ------------------------------------------------------------------------

/// Straight-line rendering of the sort-group-interpolate algorithm.
fn oracle(points: &[(f64, f64)], rows: usize, cols: usize, k: usize) -> (Vec<f64>, Vec<f64>, usize, usize) {
    let n = points.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| points[a].0.partial_cmp(&points[b].0).unwrap());
    let mut seq: Vec<(f64, f64)> = order.iter().map(|&i| points[i]).collect();
    while seq.len() < rows * cols {
        seq.push(points[order[n - 1]]);
    }
    let mut grid = Vec::with_capacity(rows * cols);
    for g in 0..rows {
        let mut group: Vec<(f64, f64)> = seq[g * cols..(g + 1) * cols].to_vec();
        group.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
        grid.extend(group);
    }
    let (mut xmin, mut xmax, mut ymin, mut ymax) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for p in points {
        xmin = xmin.min(p.0);
        xmax = xmax.max(p.0);
        ymin = ymin.min(p.1);
        ymax = ymax.max(p.1);
    }
    let norm = |v: f64, lo: f64, hi: f64| if hi == lo { 0.0 } else { (v - lo) / (hi - lo) };
    let gx: Vec<f64> = grid.iter().map(|p| norm(p.0, xmin, xmax)).collect();
    let gy: Vec<f64> = grid.iter().map(|p| norm(p.1, ymin, ymax)).collect();
    let s = k + 1;
    let (oh, ow) = (rows * s, cols * s);
    let d = s as f64;
    let mix = |a: f64, b: f64, i: usize| ((k - i + 1) as f64 / d) * a + (i as f64 / d) * b;
    let render = |g: &[f64]| -> Vec<f64> {
        // widen every row
        let mut wide = vec![0.0; rows * ow];
        for r in 0..rows {
            for cc in 0..ow {
                let (c, i) = (cc / s, cc % s);
                let a = g[r * cols + c];
                wide[r * ow + cc] = if i == 0 || c + 1 == cols { a } else { mix(a, g[r * cols + c + 1], i) };
            }
        }
        // then heighten every column
        let mut out = vec![0.0; oh * ow];
        for rr in 0..oh {
            let (r, i) = (rr / s, rr % s);
            for cc in 0..ow {
                let a = wide[r * ow + cc];
                out[rr * ow + cc] = if i == 0 || r + 1 == rows { a } else { mix(a, wide[(r + 1) * ow + cc], i) };
            }
        }
        out
    };
    (render(&gx), render(&gy), oh, ow)
}

fn algorithm_oracle() -> Outcome {
    let mut r = rng(2);
    let mut mismatches = 0;
    for _ in 0..100 {
        let n: usize = r.gen_range(1..=3000);
        let k = r.gen_range(0..=4);
        let cols = ((n as f64).sqrt().ceil() as usize + r.gen_range(0..3)).max(1);
        let rows = n.div_ceil(cols) + r.gen_range(0..2);
        let pts = random_set(n, &mut r);
        let (x, y, _) = discrete_images(&pts, rows, cols, k).unwrap();
        let (ox, oy, oh, ow) = oracle(&pts, rows, cols, k);
        if (x.height, x.width) != (oh, ow) || x.data != ox || y.data != oy {
            mismatches += 1;
        }
    }
    outcome(mismatches == 0, format!("100 seeded inputs, {mismatches} differ bit-for-bit"))
}

// 3 ------------------------------------------------------------------------

fn invertibility() -> Outcome {
    let model = StegModel::<f64>::init(Hyper::default(), 3).unwrap();
    let mut r = rng(3);
    let (h, w) = (64, 64);
    let carrier = Tensor::<f64>::from_fn(3, h, w, |_, _, _| r.gen_range(0.0..1.0));
    let secrets = Tensor::<f64>::from_fn(4, h, w, |_, _, _| r.gen_range(0.0..1.0));
    // the invertible core works on wavelet bands of the carrier and
    // space-to-depth of the secrets: 12 + 16 channels at 32x32
    let v = Tensor::concat(&[&dwt(&carrier).unwrap(), &space_to_depth(&secrets).unwrap()]).unwrap();
    let fwd = model.isn_forward(&v);
    let back = model.isn_inverse(&fwd).unwrap();
    let inn_err = back.max_abs_diff(&v);
    let img = Tensor::<f64>::from_fn(3, h, w, |_, _, _| r.gen_range(0.0..1.0));
    let dwt_err = iwt(&dwt(&img).unwrap()).unwrap().max_abs_diff(&img);
    let reshape_exact = depth_to_space(&space_to_depth(&img).unwrap()).unwrap() == img;
    outcome(
        inn_err <= 1e-5 && dwt_err <= 1e-6 && reshape_exact,
        format!(
            "{}-block network at {h}x{w}: forward/inverse max error {inn_err:.2e}; dwt/iwt {dwt_err:.2e}; reshape exact {reshape_exact}",
            model.blocks.len()
        ),
    )
}

// 4 ------------------------------------------------------------------------

fn gradient_check() -> Outcome {
    let mut model = StegModel::<f64>::init(Hyper::default(), 4).unwrap();
    let mut r = rng(4);
    // move off the zero-initialised output layers so every path is live
    let moved: Vec<f64> = model.flat().iter().map(|v| v + r.gen_range(-0.02..0.02)).collect();
    model.load_flat(&moved).unwrap();
    let (h, w) = (32, 32);
    let carrier = Tensor::<f64>::from_fn(3, h, w, |_, _, _| r.gen_range(0.1..0.9));
    let data = [Tensor::<f64>::from_fn(1, h, w, |_, _, _| r.gen_range(0.0..1.0))];
    let qr = Tensor::<f64>::from_fn(1, h, w, |_, _, _| if r.gen_bool(0.5) { 0.15 } else { 0.0 });
    let secrets = SecretStack::new(h, w, &data, Some(&qr)).unwrap();
    let weights = LossWeights::default();
    let mut grad = model.zeros_like();
    model.train_pass(&carrier, &secrets, &weights, false, &mut grad).unwrap();
    let analytic = grad.flat();
    let base = model.flat();
    let mut ranges = Vec::new();
    let mut offset = 0;
    model.visit(&mut |name, _, v| {
        ranges.push((name.to_string(), offset, v.len()));
        offset += v.len();
    });
    let eps = 1e-5;
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    let mut probe = model.clone();
    for _ in 0..24 {
        let (_, start, len) = &ranges[r.gen_range(0..ranges.len())];
        let i = start + r.gen_range(0..*len);
        let loss_at = |delta: f64, m: &mut StegModel<f64>| {
            let mut p = base.clone();
            p[i] += delta;
            m.load_flat(&p).unwrap();
            let mut scratch = m.zeros_like();
            m.train_pass(&carrier, &secrets, &weights, false, &mut scratch).unwrap().loss.total
        };
        let fd = (loss_at(eps, &mut probe) - loss_at(-eps, &mut probe)) / (2.0 * eps);
        let rel = (fd - analytic[i]).abs() / fd.abs().max(analytic[i].abs()).max(1e-6);
        worst = worst.max(rel);
        checked += 1;
    }
    outcome(
        worst <= 1e-2,
        format!("{checked} parameters at {h}x{w}, worst relative error {worst:.2e} (bound 1e-2)"),
    )
}

// 5 ------------------------------------------------------------------------

fn qr_gate() -> Outcome {
    let mut r = rng(5);
    let texts: Vec<String> = (0..100)
        .map(|_| {
            let n = r.gen_range(1..=SYMBOL_CHARS);
            (0..n).map(|_| r.gen_range(b' '..=b'~') as char).collect()
        })
        .collect();
    let mut clean = 0;
    let mut noisy = 0;
    for t in &texts {
        let img = encode_qr_payload(t, (360, 360)).unwrap();
        if decode_qr_payload(&img.pixels).ok().as_ref() == Some(t) {
            clean += 1;
        }
        let flipped = flip_modules(&img, 0.20, &mut r);
        if decode_qr_payload(&flipped.pixels).ok().as_ref() == Some(t) {
            noisy += 1;
        }
    }
    outcome(
        clean == 100 && noisy >= 95,
        format!("clean round trips {clean}/100; with 20% of modules flipped {noisy}/100 (need 95)"),
    )
}

// 6 and 8 ------------------------------------------------------------------

/// Toy training config; `k` and `p_discrete` vary for the interpolation trend.
fn toy_config(dir: &Path, k: usize, p_discrete: f64, steps: u64) -> String {
    format!(
        "[train]\nsteps = {steps}\nbatch_size = 4\nlr = 3e-4\nseed = 7\neval_every = 250\ncheckpoint_every = 500\n\
         plateau_window = 100\nplateau_patience = 2\n\
         [model]\nn_blocks = 4\ndense_growth = 16\ndense_layers = 4\nffb_features = 16\nffb_blocks = 1\nmix_init = \"identity\"\n\
         [corpus]\nsize = 200\nheld_out = 20\ncrop = 64\nk = {k}\np_discrete = {p_discrete}\np_qr = 0.7\n\
         [output]\ndir = {:?}\n",
        dir.display().to_string()
    )
}

struct Run {
    initial: chartsteg::train::HeldOut,
    last: chartsteg::train::HeldOut,
    model: PathBuf,
    seconds: f64,
}

fn train_toy(name: &str, k: usize, p_discrete: f64, steps: u64) -> Result<Run, String> {
    let dir = work_dir(name);
    let cfg = dir.join("toy.toml");
    fs::write(&cfg, toy_config(&dir.join("run"), k, p_discrete, steps)).unwrap();
    let start = Instant::now();
    let out = bin().args(["train", "--config"]).arg(&cfg).output().map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(String::from_utf8_lossy(&out.stderr).into_owned());
    }
    let evals: Vec<_> = read_log(&dir.join("run/metrics.jsonl"))
        .map_err(|e| e.to_string())?
        .into_iter()
        .filter_map(|r| match r {
            LogRecord::Eval { held_out, .. } => Some(held_out),
            _ => None,
        })
        .collect();
    Ok(Run {
        initial: evals[0],
        last: *evals.last().unwrap(),
        model: dir.join("run/model.ckpt"),
        seconds: start.elapsed().as_secs_f64(),
    })
}

fn toy_end_to_end() -> Outcome {
    let run = match train_toy("toy", 3, 0.5, 2000) {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("training failed: {e}")),
    };
    let dir = work_dir("bundles");
    let status = bin().args(["--seed", "11", "synth", "--count", "10", "--size", "384", "--out-dir"]).arg(&dir).status();
    assert!(status.unwrap().success());
    let (mut exact, mut tra_sum, mut point_ok, mut point_sets) = (0, 0.0, 0, 0);
    for i in 0..10 {
        let enc = dir.join(format!("enc_{i}.png"));
        let out = dir.join(format!("dec_{i}"));
        let info_path = dir.join(format!("info_{i}.json"));
        let data_path = dir.join(format!("data_{i}.json"));
        let e = bin()
            .arg("encode")
            .args(["--carrier".as_ref(), dir.join(format!("chart_{i}.png")).as_os_str()])
            .args(["--data".as_ref(), data_path.as_os_str()])
            .args(["--info".as_ref(), info_path.as_os_str()])
            .args(["--model".as_ref(), run.model.as_os_str()])
            .args(["--out".as_ref(), enc.as_os_str()])
            .output()
            .unwrap();
        if !e.status.success() {
            continue;
        }
        let d = bin()
            .arg("decode")
            .args(["--image".as_ref(), enc.as_os_str()])
            .args(["--model".as_ref(), run.model.as_os_str()])
            .args(["--out-dir".as_ref(), out.as_os_str()])
            .output()
            .unwrap();
        let original: InfoFile = read_json(&info_path).unwrap();
        let restored: Option<InfoFile> = read_json(&out.join("info.json")).ok();
        let restored_text = restored.as_ref().map_or("", |r| r.spec_text.as_str());
        tra_sum += tra(&original.spec_text, restored_text);
        if d.status.success() && restored.as_ref() == Some(&original) {
            exact += 1;
        }
        if let (ChartData::Discrete { points }, Ok(ChartData::Discrete { points: got })) =
            (read_json::<ChartData>(&data_path).unwrap(), read_json::<ChartData>(&out.join("data.json")))
        {
            point_sets += 1;
            if discrete_within(&points, &got, 0.02) {
                point_ok += 1;
            }
        }
    }
    let empty = zero_secret_residue(&run.model, &dir.join("chart_1.png"));
    let loss_ok = run.last.loss <= 0.5 * run.initial.loss;
    let psnr_ok = run.last.psnr >= 35.0;
    let rmse_ok = run.last.rmse <= 0.02;
    let tra_mean = tra_sum / 10.0;
    let pass = loss_ok && psnr_ok && rmse_ok && tra_mean >= 0.95 && exact >= 9;
    outcome(
        pass,
        format!(
            "trained {:.0}s; held-out loss {:.4} -> {:.4} ({}), psnr {:.2} dB ({}), data rmse {:.4} ({}), \
             QR pixel error {:.4}; bundles: tra {:.3} ({}), info exact {exact}/10 ({}), scatter sets within 2% {point_ok}/{point_sets}; \
             empty data channels mean |v| {empty:.4}",
            run.seconds,
            run.initial.loss,
            run.last.loss,
            verdict(loss_ok),
            run.last.psnr,
            verdict(psnr_ok),
            run.last.rmse,
            verdict(rmse_ok),
            run.last.qr_pixel_error,
            tra_mean,
            verdict(tra_mean >= 0.95),
            verdict(exact >= 9),
        ),
    )
}

/// Mean magnitude the model restores in data channels that carried nothing.
fn zero_secret_residue(model: &Path, carrier: &Path) -> f64 {
    let (model, _) = chartsteg::checkpoint::load(model).unwrap();
    let req = EncodeRequest {
        carrier: read_rgb(carrier).unwrap(),
        data: None,
        info: Default::default(),
        k: 3,
        max_channels: 3,
    };
    let enc = encode(&model, &req).unwrap();
    let planes = reveal_all(&model, &enc.image).unwrap();
    let vals: Vec<f64> = (0..3).flat_map(|c| planes.plane(c).iter().map(|v| f64::from(v.abs()))).collect();
    vals.iter().sum::<f64>() / vals.len() as f64
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "ok"
    } else {
        "misses gate"
    }
}

/// Restored points match the originals after the canonical ordering, each
/// coordinate within `tol` of its axis range.
fn discrete_within(original: &[[f64; 2]], restored: &[[f64; 2]], tol: f64) -> bool {
    if original.len() != restored.len() {
        return false;
    }
    let sort = |v: &[[f64; 2]]| {
        let mut s = v.to_vec();
        s.sort_by(|a, b| a.partial_cmp(b).unwrap());
        s
    };
    let (xs, ys) = (span(original.iter().map(|p| p[0])), span(original.iter().map(|p| p[1])));
    let (a, b) = (sort(original), sort(restored));
    let mut ax: Vec<f64> = a.iter().map(|p| p[0]).collect();
    let mut bx: Vec<f64> = b.iter().map(|p| p[0]).collect();
    let mut ay: Vec<f64> = a.iter().map(|p| p[1]).collect();
    let mut by: Vec<f64> = b.iter().map(|p| p[1]).collect();
    for v in [&mut ax, &mut bx, &mut ay, &mut by] {
        v.sort_by(|p, q| p.partial_cmp(q).unwrap());
    }
    let within = |p: &[f64], q: &[f64], s: (f64, f64)| p.iter().zip(q).all(|(u, v)| (u - v).abs() <= tol * (s.1 - s.0));
    within(&ax, &bx, xs) && within(&ay, &by, ys)
}

fn interpolation_trend() -> Outcome {
    let runs: Vec<Result<Run, String>> = [0, 3].iter().map(|&k| train_toy(&format!("k{k}"), k, 1.0, 1000)).collect();
    match (&runs[0], &runs[1]) {
        (Ok(k0), Ok(k3)) => outcome(
            k3.last.psnr > k0.last.psnr && k3.last.rmse < k0.last.rmse,
            format!(
                "K=0: psnr {:.2} dB rmse {:.4} ({:.0}s); K=3: psnr {:.2} dB rmse {:.4} ({:.0}s)",
                k0.last.psnr, k0.last.rmse, k0.seconds, k3.last.psnr, k3.last.rmse, k3.seconds
            ),
        ),
        _ => outcome(false, "a training run failed"),
    }
}

// 7 ------------------------------------------------------------------------

fn metric_oracles() -> Outcome {
    let mut failures = Vec::new();
    let mut check = |name: &str, ok: bool| {
        if !ok {
            failures.push(name.to_string());
        }
    };
    let a = vec![100.0; 64];
    let shifted = |d: f64| a.iter().map(|v| v + d).collect::<Vec<f64>>();
    check("psnr identical", psnr(&a, &a, PsnrMode::EightBit).unwrap() == f64::INFINITY);
    check("psnr diff 1", (psnr(&a, &shifted(1.0), PsnrMode::EightBit).unwrap() - 48.1308).abs() < 1e-4);
    check("psnr diff 16", (psnr(&a, &shifted(-16.0), PsnrMode::EightBit).unwrap() - 20.0 * (255.0f64 / 16.0).log10()).abs() < 1e-9);
    let unit: Vec<f64> = (0..50).map(|i| f64::from(i) / 50.0).collect();
    let off: Vec<f64> = unit.iter().map(|v| v + 0.1).collect();
    let checker: Vec<f64> = unit.iter().enumerate().map(|(i, v)| if i % 2 == 0 { v + 0.2 } else { v - 0.2 }).collect();
    check("rmse identical", rmse(&unit, &unit).unwrap() == 0.0);
    check("rmse offset", (rmse(&unit, &off).unwrap() - 0.1).abs() < 1e-12);
    check("rmse checker", (rmse(&unit, &checker).unwrap() - 0.2).abs() < 1e-12);

    let pattern = |h: usize, w: usize, f: &dyn Fn(usize, usize) -> usize| -> Vec<f64> {
        (0..h * w).map(|i| (f(i / w, i % w) % 256) as f64).collect()
    };
    let bin_img = pattern(16, 16, &|y, x| ((x / 3 + y / 2) % 2) * 255);
    let inv: Vec<f64> = bin_img.iter().map(|v| 255.0 - v).collect();
    check("ssim identical", (ssim(&bin_img, &bin_img, 1, 16, 16, 255.0).unwrap() - 1.0).abs() < 1e-12);
    check("ssim inverted", ssim(&bin_img, &inv, 1, 16, 16, 255.0).unwrap() < 0.0);
    // reference values from an independent SSIM implementation
    let (h, w) = (24, 20);
    let p = pattern(h, w, &|y, x| x * 7 + y * 13);
    let q = pattern(h, w, &|y, x| x * x + 3 * y + (x * y) % 17);
    let s: Vec<f64> = p
        .iter()
        .enumerate()
        .map(|(i, v)| (v + ((i % w * 5 + i / w * 3) % 11) as f64 - 5.0).clamp(0.0, 255.0))
        .collect();
    check("ssim reference 1", (ssim(&p, &q, 1, h, w, 255.0).unwrap() - 0.16369126636122322).abs() < 1e-9);
    check("ssim reference 2", (ssim(&p, &s, 1, h, w, 255.0).unwrap() - 0.9948422799309774).abs() < 1e-9);
    let rgb1 = [p.clone(), q.clone(), s.clone()].concat();
    let rgb2 = [s, p, q].concat();
    check("ssim reference rgb", (ssim(&rgb1, &rgb2, 3, h, w, 255.0).unwrap() - 0.4403917376409028).abs() < 1e-9);

    let hundred: String = (0..100).map(|i| (b'a' + (i % 26) as u8) as char).collect();
    let mut one_wrong = hundred.clone().into_bytes();
    one_wrong[40] = b'#';
    check("tra equal", tra(&hundred, &hundred) == 1.0);
    check("tra failure", tra(&hundred, "") == 0.0);
    check("tra one wrong", (tra(&hundred, std::str::from_utf8(&one_wrong).unwrap()) - 0.99).abs() < 1e-12);

    check("bpp unit", bpp(3 * 64 * 64, 3, 64, 64) == 1.0);
    check("bpp qr only", (bpp(16_000, 3, 512, 512) - 0.02035).abs() < 5e-6);
    let mut r = rng(7);
    for _ in 0..20 {
        let (c, hh, ww) = (r.gen_range(1..=4), r.gen_range(1..=1024), r.gen_range(1..=1024));
        let l = r.gen_range(0..=(8 * c * hh * ww) as u64);
        check("bpp random", bpp(l, c, hh, ww) == l as f64 / (c * hh * ww) as f64);
    }
    let distinct: BTreeSet<String> = failures.iter().cloned().collect();
    outcome(
        failures.is_empty(),
        if failures.is_empty() {
            "closed forms, reference SSIM values and 20 random BPP tuples agree".into()
        } else {
            format!("failed: {}", distinct.into_iter().collect::<Vec<_>>().join(", "))
        },
    )
}

fn main() {
    let criteria: [Criterion; 8] = [
        (1, "dtoi exactness", dtoi_exactness),
        (2, "algorithm oracle", algorithm_oracle),
        (3, "invertibility", invertibility),
        (4, "gradient check", gradient_check),
        (5, "qr error correction", qr_gate),
        (6, "toy end-to-end", toy_end_to_end),
        (7, "metric oracles", metric_oracles),
        (8, "interpolation trend", interpolation_trend),
    ];
    let only: Option<BTreeSet<u32>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let strict = std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let mut failed = 0;
    for (id, name, run) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let start = Instant::now();
        let o = run();
        failed += usize::from(!o.pass);
        println!(
            "criterion {id} {name}: {} ({}) [{:.1}s]",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            start.elapsed().as_secs_f64()
        );
    }
    if strict && failed > 0 {
        std::process::exit(1);
    }
}
