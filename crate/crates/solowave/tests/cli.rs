use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use solowave::audio::{load_waveform, save_waveform, Encoding};
use solowave::bundle::{load_bundle, read_loss_log};
use solowave::report::read_provenance;
use solowave_core::Waveform;

const TINY: &[&str] =
    &["--blocks", "3", "--kernel", "3", "--channels", "4", "--epochs", "3", "--ladder", "250,500,1000", "--coarsest", "2", "--quiet"];

fn solowave(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_solowave")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = solowave(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn toy_wav(dir: &Path, name: &str, len: usize, rate: u32) -> PathBuf {
    let x = (0..len)
        .map(|i| {
            let t = i as f32 / rate as f32;
            0.5 * (2.0 * std::f32::consts::PI * 40.0 * t).sin() + 0.2 * (2.0 * std::f32::consts::PI * 210.0 * t).sin()
        })
        .collect();
    let p = dir.join(name);
    save_waveform(&Waveform::new(x, rate).unwrap(), &p, Encoding::Float32).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn train_writes_a_complete_run_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let input = toy_wav(tmp.path(), "toy.wav", 3000, 1000);
    let run = tmp.path().join("run");
    let mut args = vec!["train", "--preset", "music", "--out", s(&run), "--seed", "4"];
    args.extend_from_slice(TINY);
    args.push(s(&input));
    ok(&args);
    for f in ["manifest.txt", "model.json", "ladder.txt", "scale_0.params", "scale_1.params", "scale_2.params", "z_star.f32", "loss_log.csv"] {
        assert!(run.join(f).is_file(), "{f}");
    }
    assert!(run.join("outputs").is_dir());
    let manifest = std::fs::read_to_string(run.join("manifest.txt")).unwrap();
    assert!(manifest.contains("alpha1 = 0\n") && manifest.contains("alpha2 = 0.0001\n"), "{manifest}");
    assert_eq!(std::fs::read_to_string(run.join("ladder.txt")).unwrap(), "0 1000\n1 500\n2 250\n");
    let b = load_bundle(&run).unwrap();
    assert_eq!(b.coarsest, 2);
    assert_eq!(b.log, read_loss_log(&run.join("loss_log.csv")).unwrap());
    assert_eq!(b.log.len(), 9);

    // rerunning from the stored manifest reproduces the parameters
    let rerun = tmp.path().join("rerun");
    ok(&["train", "--config", s(&run.join("manifest.txt")), "--out", s(&rerun), "--quiet", s(&input)]);
    for n in 0..3 {
        let f = format!("scale_{n}.params");
        assert_eq!(std::fs::read(run.join(&f)).unwrap(), std::fs::read(rerun.join(&f)).unwrap());
    }

    // generation is reproducible and recorded
    let a = tmp.path().join("a.wav");
    let c = tmp.path().join("c.wav");
    ok(&["generate", s(&run), "--seconds", "6", "--seed", "7", "--out", s(&a)]);
    ok(&["generate", s(&run), "--seconds", "6", "--seed", "7", "--out", s(&c)]);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&c).unwrap());
    assert_eq!(load_waveform(&a).unwrap().len(), 6000);
    let out = ok(&["generate", s(&run), "--samples", "4000", "--seed", "8", "--trim"]);
    assert!(out.trim().ends_with("generate_seed8.wav"));
    assert_eq!(load_waveform(out.trim()).unwrap().len(), 4000);
    let prov = read_provenance(run.join("provenance.jsonl")).unwrap();
    assert_eq!(prov.len(), 3);
    assert_eq!(prov[0].task, "generate");
    assert_eq!(prov[0].scales, vec![2, 1, 0]);
    assert_eq!(prov[0].seed, Some(7));

    let rec = ok(&["reconstruct", s(&run)]);
    assert_eq!(load_waveform(rec.trim()).unwrap().len(), 3000);

    // variations and bandwidth extension
    ok(&["variations", s(&run), s(&input), "--seed", "1"]);
    let low = tmp.path().join("low.wav");
    let w = load_waveform(&input).unwrap();
    let low_w = solowave_core::pyramid::resample(&w, 500).unwrap();
    save_waveform(&low_w, &low, Encoding::Float32).unwrap();
    let ext = ok(&["extend", s(&run), s(&low)]);
    assert_eq!(load_waveform(ext.trim()).unwrap().rate, 1000);
    let bad = toy_wav(tmp.path(), "odd.wav", 3000, 800);
    assert_eq!(solowave(&["extend", s(&run), s(&bad)]).status.code(), Some(1));

    // metrics against a run directory and against a file
    let csv = ok(&["analyze", "--snr", "--lsd", s(&input), s(&run)]);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 3, "{csv}");
    assert_eq!(lines[0], "file,metric,value");
    assert!(lines[1].contains(",snr_db,") && lines[2].contains(",lsd,"));
}

#[test]
fn analyze_reports_and_images() {
    let tmp = tempfile::tempdir().unwrap();
    let a = toy_wav(tmp.path(), "a.wav", 6000, 1000);
    let img = tmp.path().join("img");
    let report = tmp.path().join("m.csv");
    ok(&["analyze", "--snr", "--simmat", "--spectrogram", "--out-dir", s(&img), "--csv", s(&report), s(&a), s(&a)]);
    let rows = solowave::report::read_metrics(&report).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].value, 120.0);
    let (kind, grid) = solowave::images::read_raw_grid(img.join("simmat.f32")).unwrap();
    assert_eq!(kind, "SIMMAT");
    assert_eq!(grid.rows, (6000 - 4096) / 128 + 1);
    for i in 0..grid.rows {
        assert!((grid.get(i, i) - 1.0).abs() < 1e-6);
    }
    let pgm = std::fs::read(img.join("simmat.pgm")).unwrap();
    assert!(pgm.starts_with(format!("P5\n{} {}\n255\n", grid.cols, grid.rows).as_bytes()));
    assert!(img.join("reference_spectrogram.pgm").is_file());

    let b = toy_wav(tmp.path(), "b.wav", 6000, 2000);
    let out = solowave(&["analyze", "--snr", s(&a), s(&b)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("rate mismatch"));
}

#[test]
fn usage_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nope.wav");
    assert_eq!(solowave(&["train", s(&missing)]).status.code(), Some(2));
    assert_eq!(solowave(&["train"]).status.code(), Some(2));
    assert_eq!(solowave(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(solowave(&["generate", s(&tmp.path().join("norun"))]).status.code(), Some(2));
    let input = toy_wav(tmp.path(), "t.wav", 3000, 1000);
    assert_eq!(solowave(&["train", "--set", "bogus=1", s(&input)]).status.code(), Some(2));
    assert_eq!(solowave(&["train", "--preset", "jazz", s(&input)]).status.code(), Some(2));
    assert_eq!(solowave(&["--help"]).status.code(), Some(0));
}

#[test]
fn inpaint_and_denoise_commands() {
    let tmp = tempfile::tempdir().unwrap();
    let input = toy_wav(tmp.path(), "toy.wav", 3000, 1000);
    let run = tmp.path().join("inp");
    let mut args = vec!["inpaint", "--gap-start", "1.4", "--gap-len", "0.1", "--out", s(&run)];
    args.extend_from_slice(TINY);
    args.push(s(&input));
    let out = ok(&args);
    let filled = load_waveform(out.trim()).unwrap();
    let orig = load_waveform(&input).unwrap();
    assert_eq!(filled.len(), orig.len());
    // PCM16 output: compare outside the crossfaded gap within quantization
    for i in (0..1400 - 128).chain(1500 + 128..3000) {
        assert!((filled.samples[i] - orig.samples[i]).abs() <= 2f32.powi(-15), "{i}");
    }
    assert_eq!(load_bundle(&run).unwrap().mask.unwrap().gap_start, 1400);

    let run = tmp.path().join("den");
    let mut args = vec!["denoise", "--out", s(&run)];
    args.extend_from_slice(TINY);
    args.push(s(&input));
    ok(&args);
    for f in ["denoised.wav", "noisy_spectrogram.pgm", "denoised_spectrogram.pgm"] {
        assert!(run.join("outputs").join(f).is_file(), "{f}");
    }
}
