//! Fast end-to-end checks of the command-line surface: error wording, exit
//! codes, overrides, and the zero-strength passthrough.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use d4m_core::autoencoder::AePair;
use d4m_core::dataio::{load_checkpoint, load_dataset};
use d4m_core::numerics::Tensor;
use d4m_core::prototypes::PrototypeSet;

fn d4m_raw(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_d4m"));
    cmd.args(args);
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("failed to spawn d4m")
}

fn d4m_ok(args: &[&str]) {
    let out = d4m_raw(args, &[]);
    assert!(out.status.success(), "d4m {:?}:\n{}", args, String::from_utf8_lossy(&out.stderr));
}

/// A miniature trained workspace shared by the behavior tests.
fn tiny_workspace() -> &'static Path {
    static DIR: OnceLock<PathBuf> = OnceLock::new();
    DIR.get_or_init(|| {
        let dir = std::env::temp_dir().join(format!("d4m_cli_behavior_{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let cfg = dir.join("tiny.cfg");
        std::fs::write(
            &cfg,
            "data.categories = 2\n\
             data.train_per_category = 24\n\
             data.test_per_category = 8\n\
             data.height = 12\n\
             data.width = 12\n\
             ae.latent_dim = 6\n\
             ae.hidden1 = 24\n\
             ae.hidden2 = 12\n\
             ae.epochs = 2\n\
             diff.steps = 10\n\
             diff.hidden1 = 16\n\
             diff.hidden2 = 16\n\
             diff.timesteps = 50\n\
             proto.centers_per_category = 3\n\
             distill.ipc = 3\n\
             distill.ddim_steps = 8\n\
             ttm.epochs = 2\n\
             ttm.teacher_epochs = 2\n\
             ttm.hidden1 = 16\n\
             ttm.hidden2 = 8\n",
        )
        .unwrap();
        let (c, o) = (cfg.to_str().unwrap().to_string(), dir.to_str().unwrap().to_string());
        for stage in ["gen-data", "train-ae", "train-diff", "train-teacher", "cluster"] {
            d4m_ok(&[stage, "--config", &c, "--out", &o, "--seed", "3"]);
        }
        dir
    })
}

fn tiny_cfg(dir: &Path) -> String {
    dir.join("tiny.cfg").to_str().unwrap().to_string()
}

#[test]
fn missing_input_names_the_producing_subcommand() {
    let dir = std::env::temp_dir().join(format!("d4m_missing_{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let out = d4m_raw(&["evaluate", "--out", dir.to_str().unwrap()], &[]);
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.starts_with("D4M_ERROR "), "error must carry the machine-parsable prefix: {stderr}");
    assert!(stderr.contains("run train-student first"), "got: {stderr}");

    let out = d4m_raw(&["train-ae", "--out", dir.to_str().unwrap()], &[]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("run gen-data first"));
}

#[test]
fn unknown_config_key_is_rejected() {
    let out = d4m_raw(&["gen-data", "--set", "nota.key=1"], &[]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown config key"));
}

#[test]
fn out_dir_env_var_is_honored_and_flag_wins() {
    let env_dir = std::env::temp_dir().join(format!("d4m_envdir_{}", std::process::id()));
    let flag_dir = std::env::temp_dir().join(format!("d4m_flagdir_{}", std::process::id()));
    let out = d4m_raw(
        &["gen-data", "--set", "data.train_per_category=2", "--set", "data.test_per_category=2", "--set", "data.height=8", "--set", "data.width=8"],
        &[("D4M_OUT_DIR", env_dir.to_str().unwrap())],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(env_dir.join("shapes_train.d4md").exists());

    let out = d4m_raw(
        &["gen-data", "--out", flag_dir.to_str().unwrap(), "--set", "data.train_per_category=2", "--set", "data.test_per_category=2", "--set", "data.height=8", "--set", "data.width=8"],
        &[("D4M_OUT_DIR", env_dir.to_str().unwrap())],
    );
    assert!(out.status.success());
    assert!(flag_dir.join("shapes_train.d4md").exists());
}

#[test]
fn zero_strength_synthesis_decodes_prototypes() {
    let dir = tiny_workspace();
    let cfg = tiny_cfg(dir);
    let o = dir.to_str().unwrap().to_string();
    d4m_ok(&["synthesize", "--config", &cfg, "--out", &o, "--seed", "3", "--strength", "0"]);

    let distilled = load_dataset(dir.join("distilled.d4md")).unwrap();
    let protos = PrototypeSet::from_checkpoint(&load_checkpoint(dir.join("protos.d4mw")).unwrap()).unwrap();
    let ae = AePair::from_checkpoint(&load_checkpoint(dir.join("ae.d4mw")).unwrap()).unwrap();

    for (i, rec) in d4m_core::distiller::parse_provenance(
        &std::fs::read_to_string(dir.join("distilled_provenance.csv")).unwrap(),
    )
    .unwrap()
    .iter()
    .enumerate()
    {
        let proto = protos.prototype(rec.category, rec.prototype);
        let z = Tensor::new(vec![1, proto.len()], proto.to_vec()).unwrap();
        let pixels = d4m_core::distiller::decode_to_pixels(&ae, &z).unwrap();
        assert_eq!(distilled.image(i), &pixels[..], "image {i} is not the decoded prototype");
    }

    // The resolved-config echo reflects the flag override.
    let echo = std::fs::read_to_string(dir.join("config.resolved.cfg")).unwrap();
    assert!(echo.contains("distill.strength = 0"), "echo must show the overridden strength");

    // PGM dumps exist and are plain-text P2.
    let dump = std::fs::read_to_string(dir.join("dumps").join(format!(
        "img_000_{}.pgm",
        distilled.category_names[distilled.labels[0] as usize]
    )))
    .unwrap();
    assert!(dump.starts_with("P2\n"));
}

#[test]
fn student_and_evaluate_round_trip_on_tiny_workspace() {
    let dir = tiny_workspace();
    let cfg = tiny_cfg(dir);
    // Fresh synthesis, since another test may have overwritten distilled.d4md
    // with the zero-strength variant; order independence matters here.
    let sub = dir.join("student_run");
    std::fs::create_dir_all(&sub).unwrap();
    for name in ["shapes_train.d4md", "shapes_test.d4md", "ae.d4mw", "diff.d4mw", "teacher.d4mw", "protos.d4mw"] {
        std::fs::copy(dir.join(name), sub.join(name)).unwrap();
    }
    let so = sub.to_str().unwrap().to_string();
    d4m_ok(&["synthesize", "--config", &cfg, "--out", &so, "--seed", "3"]);
    d4m_ok(&["train-student", "--config", &cfg, "--out", &so, "--seed", "3"]);
    d4m_ok(&["evaluate", "--config", &cfg, "--out", &so, "--seed", "3"]);
    let metrics = std::fs::read_to_string(sub.join("metrics.csv")).unwrap();
    for key in ["student_test_accuracy", "teacher_test_accuracy", "inception_score", "fid_test_vs_distilled"] {
        assert!(metrics.contains(key), "metrics.csv missing {key}");
    }
    assert!(sub.join("report.txt").exists());
    assert!(sub.join("manifest.evaluate.txt").exists());

    // Hard-label variant also runs without the teacher checkpoint.
    let hard = dir.join("hard_run");
    std::fs::create_dir_all(&hard).unwrap();
    for name in ["shapes_train.d4md", "ae.d4mw", "diff.d4mw", "protos.d4mw"] {
        std::fs::copy(dir.join(name), hard.join(name)).unwrap();
    }
    let ho = hard.to_str().unwrap().to_string();
    d4m_ok(&["synthesize", "--config", &cfg, "--out", &ho, "--seed", "3"]);
    d4m_ok(&["train-student", "--hard-labels", "--config", &cfg, "--out", &ho, "--seed", "3"]);
    assert!(hard.join("student.d4mw").exists());

}
