//! End-to-end tests of the pipeline and of the chained subcommands.

mod common;

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use common::*;
use uvbake::compose::{inpaint_pullpush, FusedTexture, Provenance};
use uvbake::formats::{read_fused, read_partial};
use uvbake::imaging::LinearImage;
use uvbake::pipeline::{names, run_pipeline, ErrorKind, PipelineConfig};

fn uvbake(args: &[&std::ffi::OsStr]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_uvbake")).args(args).output().unwrap()
}

fn os<S: AsRef<std::ffi::OsStr> + ?Sized>(s: &S) -> &std::ffi::OsStr {
    s.as_ref()
}

fn expect_success(out: &Output) {
    assert!(out.status.success(), "exit {:?}\nstderr: {}", out.status, String::from_utf8_lossy(&out.stderr));
}

fn load(fixture: &Fixture) -> PipelineConfig {
    PipelineConfig::load(&fixture.config).unwrap()
}

/// Sphere seen from the front and from the +x side, so the two views overlap.
fn overlapping_sphere_fixture(dir: &Path, resolution: usize) -> Fixture {
    let mesh = pole_sphere();
    let size = 256;
    let scale = 0.45 * size as f64;
    let (f, s) = (front_camera(scale, size), side_camera(scale, size));
    let fi = render_binned(&mesh, &f, sphere_texture(), [0.0; 3]);
    let si = render_binned(&mesh, &s, sphere_texture(), [0.0; 3]);
    write_fixture(dir, &mesh, [&f, &s], [&fi, &si], resolution, serde_json::json!({}))
}

/// Round trip through the 8-bit exchange encoding.
fn quantized(tex: &FusedTexture, dir: &Path) -> FusedTexture {
    let p = dir.join("q.png");
    tex.save_png(&p).unwrap();
    let img = LinearImage::load(&p).unwrap();
    let r = tex.resolution;
    let mut out = tex.clone();
    for i in 0..r * r {
        out.rgb[i] = img.get(i % r, r - 1 - i / r);
    }
    out
}

#[test]
fn two_planes_give_solid_disjoint_regions() {
    let dir = tempfile::tempdir().unwrap();
    let fixture = two_plane_fixture(dir.path(), 64);
    let cfg = load(&fixture);
    let report = run_pipeline(&cfg).unwrap();

    let fused = read_fused(cfg.output_dir.join(names::FUSED_FTX)).unwrap();
    let r = fused.resolution;
    let (mut front, mut back) = (0, 0);
    for i in 0..r * r {
        let left = (i % r) < r / 2;
        match fused.provenance[i] {
            Provenance::Front => {
                assert!(left, "front texel {i} outside the left half");
                assert_eq!(fused.rgb[i], [1.0, 0.0, 0.0]);
                front += 1;
            }
            Provenance::Back => {
                assert!(!left, "back texel {i} outside the right half");
                assert_eq!(fused.rgb[i], [0.0, 0.0, 1.0]);
                back += 1;
            }
            Provenance::Both => panic!("texel {i} seen by both views"),
            Provenance::Empty | Provenance::Inpainted => {}
        }
    }
    assert!(front > 0 && back > 0);
    assert_eq!(front, back);
    assert!(report.mpae.abs() < 1e-6, "mpae {}", report.mpae);
    assert_eq!(report.oce, None);
    assert_eq!(report.overlap_texels, 0);
    assert!(report.render_text().contains("n/a"));
}

#[test]
fn missing_image_names_stage_and_path() {
    let dir = tempfile::tempdir().unwrap();
    let fixture = two_plane_fixture(dir.path(), 16);
    std::fs::remove_file(dir.path().join("front.png")).unwrap();
    let e = run_pipeline(&load(&fixture)).unwrap_err();
    assert_eq!(e.kind, ErrorKind::Validation);
    let msg = e.to_string();
    assert!(msg.contains("stage=bake_view(front): file not found"), "{msg}");
    assert!(msg.contains("front.png"), "{msg}");
    assert!(!dir.path().join("out").exists(), "validation must fail before any output is written");

    let out = uvbake(&[os("run"), os("--config"), fixture.config.as_os_str()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("stage=bake_view(front): file not found"));
}

#[test]
fn failed_run_leaves_previous_artifacts_untouched() {
    let dir = tempfile::tempdir().unwrap();
    let fixture = two_plane_fixture(dir.path(), 16);
    let mut cfg = load(&fixture);
    run_pipeline(&cfg).unwrap();
    let texture = cfg.output_dir.join(names::TEXTURE_FTX);
    let before = std::fs::read(&texture).unwrap();

    cfg.inpaint = uvbake::pipeline::InpaintMode::External { command: vec!["false".into()] };
    cfg.resolution = 32;
    let e = run_pipeline(&cfg).unwrap_err();
    assert_eq!(e.stage, "inpaint");
    assert_eq!(e.kind, ErrorKind::Runtime);
    assert_eq!(std::fs::read(&texture).unwrap(), before);
    assert_eq!(read_partial(cfg.output_dir.join(names::FRONT_PTX)).unwrap().resolution, 16);
    assert!(cfg.output_dir.join("front.ptx.partial").exists());
}

#[test]
fn run_equals_chained_subcommands() {
    let dir = tempfile::tempdir().unwrap();
    let fixture = overlapping_sphere_fixture(dir.path(), 64);
    let cfg = load(&fixture);
    let report = run_pipeline(&cfg).unwrap();
    assert!(report.oce.is_some());

    let chain = dir.path().join("chain");
    std::fs::create_dir_all(&chain).unwrap();
    let res = cfg.resolution.to_string();
    for view in ["front", "back"] {
        let out = uvbake(&[
            os("bake"),
            os("--view"),
            os(view),
            os("--mesh"),
            dir.path().join("mesh.obj").as_os_str(),
            os("--fit"),
            dir.path().join(format!("{view}_fit.json")).as_os_str(),
            os("--image"),
            dir.path().join(format!("{view}.png")).as_os_str(),
            os("--resolution"),
            os(&res),
            os("--out"),
            chain.join(format!("{view}.ptx")).as_os_str(),
        ]);
        expect_success(&out);
    }
    let p = |name: &str| chain.join(name);
    expect_success(&uvbake(&[
        os("fuse"),
        os("--front"),
        p(names::FRONT_PTX).as_os_str(),
        os("--back"),
        p(names::BACK_PTX).as_os_str(),
        os("--out"),
        p(names::FUSED_FTX).as_os_str(),
    ]));
    expect_success(&uvbake(&[
        os("inpaint"),
        os("--input"),
        p(names::FUSED_FTX).as_os_str(),
        os("--out"),
        p(names::TEXTURE_FTX).as_os_str(),
        os("--png"),
        p(names::TEXTURE_PNG).as_os_str(),
        os("--provenance"),
        p(names::PROVENANCE_PNG).as_os_str(),
    ]));
    expect_success(&uvbake(&[
        os("metrics"),
        os("--front"),
        p(names::FRONT_PTX).as_os_str(),
        os("--back"),
        p(names::BACK_PTX).as_os_str(),
        os("--label"),
        os("fixture"),
        os("--json"),
        p(names::REPORT_JSON).as_os_str(),
        os("--text"),
        p(names::REPORT_TXT).as_os_str(),
    ]));

    for name in [
        names::FRONT_PTX,
        names::BACK_PTX,
        "front.json",
        "back.json",
        names::FUSED_FTX,
        names::TEXTURE_FTX,
        names::TEXTURE_PNG,
        names::PROVENANCE_PNG,
        names::REPORT_JSON,
        names::REPORT_TXT,
    ] {
        assert!(files_equal(&cfg.output_dir.join(name), &p(name)), "{name} differs between run and the chained subcommands");
    }
}

#[test]
fn external_inpainter_matches_pullpush_on_quantized_input() {
    let dir = tempfile::tempdir().unwrap();
    let fixture = overlapping_sphere_fixture(dir.path(), 64);
    let mut cfg = load(&fixture);
    let exe = env!("CARGO_BIN_EXE_uvbake").to_string();
    cfg.inpaint = uvbake::pipeline::InpaintMode::External { command: vec![exe, "inpaint".into(), "--exchange".into()] };
    run_pipeline(&cfg).unwrap();

    let fused = read_fused(cfg.output_dir.join(names::FUSED_FTX)).unwrap();
    let external = read_fused(cfg.output_dir.join(names::TEXTURE_FTX)).unwrap();
    let reference = inpaint_pullpush(&quantized(&fused, dir.path()), &fused.footprint).unwrap();
    let reference = quantized(&reference, dir.path());

    let mut filled = 0;
    for i in 0..fused.rgb.len() {
        assert_eq!(external.provenance[i], reference.provenance[i], "provenance of texel {i}");
        if external.provenance[i] == Provenance::Inpainted {
            assert_eq!(external.rgb[i], reference.rgb[i], "colour of texel {i}");
            filled += 1;
        } else {
            assert_eq!(external.rgb[i], fused.rgb[i], "texel {i} must keep its fused colour");
        }
    }
    assert!(filled > 0);
    assert_eq!(external.count(Provenance::Empty), fused.provenance.iter().zip(&fused.footprint).filter(|(&p, &f)| p == Provenance::Empty && !f).count());
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let fixture = overlapping_sphere_fixture(dir.path(), 32);
    let mut cfg = load(&fixture);
    run_pipeline(&cfg).unwrap();
    let first = cfg.output_dir.clone();
    cfg.output_dir = dir.path().join("again");
    run_pipeline(&cfg).unwrap();
    let mut n = 0;
    for entry in std::fs::read_dir(&first).unwrap() {
        let name: PathBuf = entry.unwrap().file_name().into();
        assert!(files_equal(&first.join(&name), &cfg.output_dir.join(&name)), "{}", name.display());
        n += 1;
    }
    assert!(n >= 10);
}

#[test]
fn supplied_mask_rejects_background_texels() {
    let dir = tempfile::tempdir().unwrap();
    let fixture = two_plane_fixture(dir.path(), 32);
    // mask out the left half of the front photograph
    let mask = LinearImage::from_fn(128, 128, |x, _| if x < 64 { [0.0; 3] } else { [1.0; 3] });
    mask.save_png(dir.path().join("front_mask.png")).unwrap();
    let mut cfg = load(&fixture);
    let unmasked = run_pipeline(&cfg).unwrap();
    cfg.front.mask = Some(dir.path().join("front_mask.png"));
    cfg.output_dir = dir.path().join("masked");
    let masked = run_pipeline(&cfg).unwrap();
    assert!(masked.coverage_front < 0.75 * unmasked.coverage_front, "{} vs {}", masked.coverage_front, unmasked.coverage_front);
    assert_eq!(masked.coverage_back, unmasked.coverage_back);
}

#[test]
fn fit_for_the_wrong_view_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let fixture = two_plane_fixture(dir.path(), 16);
    std::fs::copy(dir.path().join("front_fit.json"), dir.path().join("back_fit.json")).unwrap();
    let e = run_pipeline(&load(&fixture)).unwrap_err();
    assert_eq!(e.kind, ErrorKind::Validation);
    assert_eq!(e.stage, "load_fit(back)");
    assert!(e.to_string().contains("front view"), "{e}");
}
