mod common;

use std::fs;
use std::path::Path;
use std::process::Command as Process;

use common::desk_corpus;
use mssrnet::cli::{checkpoint_path, cmd_eval, cmd_sr, cmd_train, Command, RunConfig};
use mssrnet::dataset::{CorpusConfig, TrainCorpus};
use mssrnet::imaging::{bicubic_resize, load_image, rgb_to_y, rgb_to_ycbcr, save_image, ycbcr_to_rgb, ImagePlane};
use mssrnet::train::Trainer;
use mssrnet::weights::save_weights;
use mssrnet::{Error, Mssrnet, NetConfig};

/// Writes the first `k` corpus images, cropped to `size`, as PNGs.
fn image_dir(dir: &Path, k: usize, size: (usize, usize)) {
    fs::create_dir_all(dir).unwrap();
    for (name, img) in desk_corpus().into_iter().take(k) {
        let stem = Path::new(&name).file_stem().unwrap().to_str().unwrap().to_owned();
        save_image(&img.crop(0, 0, size.0, size.1).unwrap(), dir.join(format!("{stem}.png"))).unwrap();
    }
}

fn small_train(data: &Path, out: &Path) -> RunConfig {
    RunConfig {
        scale: Some(2),
        n: Some(2),
        m: Some(1),
        epochs: 2,
        iters: 4,
        batch: 2,
        seed: 11,
        holdout: 0.0,
        ..RunConfig::new(Command::Train, data, out)
    }
}

#[test]
fn training_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    image_dir(&data, 3, (64, 64));
    let a = cmd_train(&small_train(&data, &tmp.path().join("a"))).unwrap();
    let b = cmd_train(&small_train(&data, &tmp.path().join("b"))).unwrap();
    assert_eq!(fs::read(&a.weights).unwrap(), fs::read(&b.weights).unwrap());
    assert_eq!(a.logs, b.logs);
    let mut other = small_train(&data, &tmp.path().join("c"));
    other.seed = 12;
    assert_ne!(fs::read(cmd_train(&other).unwrap().weights).unwrap(), fs::read(&a.weights).unwrap());
}

#[test]
fn training_descends_on_one_image() {
    let img = rgb_to_y(&desk_corpus()[7].1);
    let corpus = TrainCorpus::build(&[img], CorpusConfig::new(2)).unwrap();
    let mut trainer = Trainer::<f32>::new(&NetConfig::new(2, 1, 1, 3)).unwrap();
    for _ in 0..200 {
        trainer.step(&corpus, 4, 1e-3).unwrap();
    }
    assert!(trainer.smoothed[199] < trainer.smoothed[9], "{} vs {}", trainer.smoothed[199], trainer.smoothed[9]);
}

#[test]
fn non_finite_loss_aborts_without_update() {
    let img = rgb_to_y(&desk_corpus()[0].1);
    let corpus = TrainCorpus::build(&[img], CorpusConfig::new(2)).unwrap();
    let mut trainer = Trainer::<f32>::new(&NetConfig::new(1, 0, 1, 0)).unwrap();
    trainer.net.recon.bias[0] = f32::NAN;
    let before = trainer.net.convs().iter().map(|c| c.weight.clone()).collect::<Vec<_>>();
    assert!(matches!(trainer.step(&corpus, 2, 1e-3), Err(Error::Numeric(_))));
    let after = trainer.net.convs().iter().map(|c| c.weight.clone()).collect::<Vec<_>>();
    assert_eq!(before, after);
    assert_eq!(trainer.adam_steps(), 0);
}

#[test]
fn hundred_epoch_log_and_checkpoints() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    image_dir(&data, 2, (50, 50));
    let out = tmp.path().join("run");
    let cfg = RunConfig { n: Some(1), m: Some(0), epochs: 100, iters: 1, batch: 1, ..small_train(&data, &out) };
    let report = cmd_train(&cfg).unwrap();
    let log = fs::read_to_string(out.join("train.log")).unwrap();
    let lines: Vec<Vec<&str>> = log.lines().skip(1).map(|l| l.split('\t').collect()).collect();
    assert_eq!(lines.len(), 100);
    assert!(lines.iter().all(|f| f.len() == 4));
    for (epoch, lr) in [(1, "0.001"), (50, "0.001"), (51, "0.0001"), (80, "0.0001"), (81, "0.00001"), (100, "0.00001")]
    {
        assert_eq!(lines[epoch - 1][0], epoch.to_string());
        assert_eq!(lines[epoch - 1][1], lr, "epoch {epoch}");
    }
    assert_eq!(report.checkpoints.len(), 10);
    for e in (10..=100).step_by(10) {
        assert!(checkpoint_path(&out, e).exists());
    }
    assert!(out.join("final.mssr").exists());
}

#[test]
fn holdout_psnr_is_logged() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    image_dir(&data, 4, (60, 60));
    let cfg = RunConfig { holdout: 0.25, ..small_train(&data, &tmp.path().join("o")) };
    let report = cmd_train(&cfg).unwrap();
    assert_eq!(report.holdout.len(), 1);
    assert!(report.logs.iter().all(|l| l.holdout_psnr.is_some_and(f64::is_finite)));
}

fn expected_bicubic(img: &ImagePlane, scale: usize) -> ImagePlane {
    let up = bicubic_resize(&rgb_to_ycbcr(img), img.width() * scale, img.height() * scale).unwrap();
    ycbcr_to_rgb(&up)
}

#[test]
fn zero_residual_network_is_pure_bicubic() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("in");
    // Odd dims: sr does not need a multiple of the scale.
    image_dir(&input, 2, (37, 29));
    let weights = tmp.path().join("zero.mssr");
    save_weights(&Mssrnet::<f32>::zeros(&NetConfig::new(2, 1, 1, 0)).unwrap(), 3, &weights).unwrap();

    let out = tmp.path().join("out");
    let cfg = RunConfig { weights: Some(weights), ..RunConfig::new(Command::Sr, &input, &out) };
    let written = cmd_sr(&cfg).unwrap();
    assert_eq!(written.len(), 2);
    let bicubic_out = tmp.path().join("bic");
    let plain = cmd_sr(&RunConfig { scale: Some(3), bicubic_only: true, ..RunConfig::new(Command::Sr, &input, &bicubic_out) })
        .unwrap();
    for (sr_path, bic_path) in written.iter().zip(&plain) {
        let src = load_image(input.join(format!(
            "{}.png",
            sr_path.file_stem().unwrap().to_str().unwrap().trim_end_matches("_x3")
        )))
        .unwrap();
        let sr = load_image(sr_path).unwrap();
        assert_eq!((sr.width(), sr.height()), (37 * 3, 29 * 3));
        assert_eq!(fs::read(sr_path).unwrap(), fs::read(bic_path).unwrap());
        // And equal to the library composition, up to 8-bit quantization.
        let want = expected_bicubic(&src, 3);
        for (a, b) in sr.samples().iter().zip(want.samples()) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-9);
        }
    }
}

#[test]
fn mismatched_weights_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("in");
    image_dir(&input, 1, (20, 20));
    let weights = tmp.path().join("w.mssr");
    save_weights(&Mssrnet::<f32>::build(&NetConfig::new(2, 1, 1, 0)).unwrap(), 2, &weights).unwrap();
    let base = RunConfig { weights: Some(weights.clone()), ..RunConfig::new(Command::Sr, &input, tmp.path()) };
    for cfg in [
        RunConfig { n: Some(3), ..base.clone() },
        RunConfig { m: Some(4), ..base.clone() },
        RunConfig { scale: Some(4), ..base.clone() },
    ] {
        assert!(matches!(cmd_sr(&cfg), Err(Error::Compatibility(_))), "{cfg:?}");
    }
    assert!(cmd_sr(&RunConfig { n: Some(2), m: Some(1), ..base }).is_ok());
    let rgb = tmp.path().join("rgb.mssr");
    save_weights(&Mssrnet::<f32>::build(&NetConfig::new(2, 1, 3, 0)).unwrap(), 2, &rgb).unwrap();
    let cfg = RunConfig { weights: Some(rgb), ..RunConfig::new(Command::Eval, &input, tmp.path()) };
    assert!(matches!(cmd_eval(&cfg), Err(Error::Compatibility(_))));
}

#[test]
fn eval_with_other_scale_still_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("hr");
    image_dir(&data, 3, (48, 48));
    let weights = tmp.path().join("w.mssr");
    save_weights(&Mssrnet::<f32>::zeros(&NetConfig::new(1, 0, 1, 0)).unwrap(), 2, &weights).unwrap();
    let out = tmp.path().join("eval");
    let cfg = RunConfig { scale: Some(3), weights: Some(weights), ..RunConfig::new(Command::Eval, &data, &out) };
    let report = cmd_eval(&cfg).unwrap();
    assert_eq!((report.scale, report.shave, report.entries.len()), (3, 3, 3));
    // Zero residual: identical to the bicubic-only evaluation.
    let bic = cmd_eval(&RunConfig { bicubic_only: true, weights: None, ..cfg.clone() }).unwrap();
    assert_eq!(report, bic);
    let tsv = fs::read_to_string(out.join("eval_x3.tsv")).unwrap();
    assert_eq!(tsv.lines().count(), 3);
    assert_eq!(tsv.lines().next().unwrap().split('\t').count(), 3);
}

#[test]
fn binary_runs_eval_and_rejects_bad_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("hr");
    image_dir(&data, 2, (40, 40));
    fs::write(data.join("notes.txt"), "not an image").unwrap();
    let bin = env!("CARGO_BIN_EXE_mssrnet");
    let out = Process::new(bin)
        .args(["eval", "--bicubic-only", "--scale", "2", "--data"])
        .arg(&data)
        .arg("--out")
        .arg(tmp.path())
        .env("MSSRNET_THREADS", "1")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("average"), "{stdout}");
    assert!(String::from_utf8_lossy(&out.stderr).contains("notes.txt"));

    let bad = Process::new(bin).args(["train", "--scale", "5", "--data", "x"]).output().unwrap();
    assert!(!bad.status.success());
    let missing = Process::new(bin).args(["train", "--data"]).arg(tmp.path().join("nowhere")).output().unwrap();
    assert!(!missing.status.success());
    assert!(String::from_utf8_lossy(&missing.stderr).contains("i/o error"));
}
