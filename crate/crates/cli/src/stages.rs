//! One function per subcommand. Stages communicate only through files in
//! the workspace, so the pipeline subcommand is exactly the staged sequence.

use std::fmt::Write as _;

use d4m_core::autoencoder::{train_autoencoder, AeConfig, AePair};
use d4m_core::dataio::{
    dump_image, generate_shapes, load_checkpoint, load_dataset, save_checkpoint, save_dataset,
};
use d4m_core::diffusion::{
    diffusion_from_checkpoint, diffusion_to_checkpoint, train_denoiser, DiffTrainConfig, NoiseSchedule,
};
use d4m_core::distiller::{distill_random_init, synthesize, DistillConfig};
use d4m_core::evalkit;
use d4m_core::numerics::StreamRng;
use d4m_core::prototypes::{learn_prototypes, KMeansConfig, PrototypeSet};
use d4m_core::ttm::{train_student, train_student_hard, train_teacher, ClassifierNet, KDConfig};

use crate::config::{ConfigError, RunConfig};
use crate::workspace::{history_csv, write_file, StageError, StageResult, Workspace};

fn core_err(stage: &'static str) -> impl Fn(d4m_core::Error) -> StageError {
    move |e| StageError::new(stage, e.to_string())
}

fn cfg_err(stage: &'static str) -> impl Fn(ConfigError) -> StageError {
    move |e| StageError::new(stage, e.to_string())
}

/// Stage substream of the global seed.
fn stage_seed(cfg: &RunConfig, stage: &'static str, name: &str) -> StageResult<u64> {
    let seed = cfg.get_u64("seed").map_err(cfg_err(stage))?;
    Ok(StreamRng::new(seed).derive(&format!("stage.{name}")))
}

fn ae_config(cfg: &RunConfig, stage: &'static str) -> StageResult<AeConfig> {
    let e = cfg_err(stage);
    Ok(AeConfig {
        latent_dim: cfg.get_usize("ae.latent_dim").map_err(&e)?,
        hidden: [cfg.get_usize("ae.hidden1").map_err(&e)?, cfg.get_usize("ae.hidden2").map_err(&e)?],
        epochs: cfg.get_usize("ae.epochs").map_err(&e)?,
        batch_size: cfg.get_usize("ae.batch_size").map_err(&e)?,
        lr: cfg.get_f64("ae.lr").map_err(&e)?,
        lr_min: cfg.get_f64("ae.lr_min").map_err(&e)?,
        weight_decay: cfg.get_f64("ae.weight_decay").map_err(&e)?,
    })
}

fn schedule_from(cfg: &RunConfig, stage: &'static str) -> StageResult<NoiseSchedule> {
    let e = cfg_err(stage);
    NoiseSchedule::linear(
        cfg.get_usize("diff.timesteps").map_err(&e)?,
        cfg.get_f64("diff.beta_start").map_err(&e)?,
        cfg.get_f64("diff.beta_end").map_err(&e)?,
    )
    .map_err(core_err(stage))
}

fn kd_config(cfg: &RunConfig, stage: &'static str, epochs_key: &str) -> StageResult<KDConfig> {
    let e = cfg_err(stage);
    Ok(KDConfig {
        temperature: cfg.get_f64("ttm.temperature").map_err(&e)?,
        epochs: cfg.get_usize(epochs_key).map_err(&e)?,
        batch_size: cfg.get_usize("ttm.batch_size").map_err(&e)?,
        lr: cfg.get_f64("ttm.lr").map_err(&e)?,
        lr_min: cfg.get_f64("ttm.lr_min").map_err(&e)?,
        weight_decay: cfg.get_f64("ttm.weight_decay").map_err(&e)?,
        hidden: [cfg.get_usize("ttm.hidden1").map_err(&e)?, cfg.get_usize("ttm.hidden2").map_err(&e)?],
        augment: cfg.get_bool("ttm.augment").map_err(&e)?,
        crop_min_scale: cfg.get_f64("ttm.crop_min_scale").map_err(&e)?,
    })
}

fn distill_config(cfg: &RunConfig, stage: &'static str) -> StageResult<DistillConfig> {
    let e = cfg_err(stage);
    Ok(DistillConfig {
        prototypes_per_category: cfg.get_usize("proto.centers_per_category").map_err(&e)?,
        images_per_category: cfg.get_usize("distill.ipc").map_err(&e)?,
        strength: cfg.get_f64("distill.strength").map_err(&e)?,
        guidance: cfg.get_f64("distill.guidance").map_err(&e)?,
        ddim_steps: cfg.get_usize("distill.ddim_steps").map_err(&e)?,
        kmeans_passes: cfg.get_usize("proto.passes").map_err(&e)?,
        kmeans_batch: cfg.get_usize("proto.batch_size").map_err(&e)?,
        seed: stage_seed(cfg, stage, "distill")?,
    })
}

/// Encode the training set and standardize the latents.
fn standardized_latents(
    ae: &AePair,
    data: &d4m_core::dataio::ImageDataset,
    stage: &'static str,
) -> StageResult<d4m_core::autoencoder::LatentBatch> {
    let mut latents = ae.encode(data).map_err(core_err(stage))?;
    latents.latents = ae.standardize(&latents.latents);
    Ok(latents)
}

pub fn gen_data(cfg: &RunConfig, ws: &Workspace) -> StageResult<()> {
    const STAGE: &str = "gen-data";
    ws.ensure_out_dir(STAGE)?;
    let e = cfg_err(STAGE);
    let k = cfg.get_usize("data.categories").map_err(&e)?;
    let (h, w) = (cfg.get_usize("data.height").map_err(&e)?, cfg.get_usize("data.width").map_err(&e)?);
    let noise = cfg.get_f64("data.noise_std").map_err(&e)?;
    let seed = cfg.get_u64("seed").map_err(&e)?;
    let root = StreamRng::new(seed);

    let train = generate_shapes(cfg.get_usize("data.train_per_category").map_err(&e)?, k, h, w, noise, root.derive("data.train"))
        .map_err(core_err(STAGE))?;
    let test = generate_shapes(cfg.get_usize("data.test_per_category").map_err(&e)?, k, h, w, noise, root.derive("data.test"))
        .map_err(core_err(STAGE))?;
    save_dataset(&train, ws.train_data()).map_err(core_err(STAGE))?;
    save_dataset(&test, ws.test_data()).map_err(core_err(STAGE))?;
    ws.write_manifest(STAGE, cfg, &[])?;
    println!("gen-data: wrote {} train and {} test images ({} categories)", train.len(), test.len(), k);
    Ok(())
}

pub fn train_ae(cfg: &RunConfig, ws: &Workspace) -> StageResult<()> {
    const STAGE: &str = "train-ae";
    ws.ensure_out_dir(STAGE)?;
    ws.require(STAGE, &ws.train_data(), "gen-data")?;
    let data = load_dataset(ws.train_data()).map_err(core_err(STAGE))?;
    let config = ae_config(cfg, STAGE)?;
    let (ae, history) = train_autoencoder(&data, &config, stage_seed(cfg, STAGE, "ae")?).map_err(core_err(STAGE))?;
    save_checkpoint(&ae.to_checkpoint().map_err(core_err(STAGE))?, ws.ae_checkpoint()).map_err(core_err(STAGE))?;
    write_file(STAGE, &ws.loss_csv("ae"), history_csv("epoch", &history).as_bytes())?;
    ws.write_manifest(STAGE, cfg, &[&ws.train_data()])?;
    if let (Some(first), Some(last)) = (history.first(), history.last()) {
        println!("train-ae: reconstruction MSE {first:.5} -> {last:.5} over {} epochs", history.len());
    }
    Ok(())
}

pub fn train_diff(cfg: &RunConfig, ws: &Workspace) -> StageResult<()> {
    const STAGE: &str = "train-diff";
    ws.ensure_out_dir(STAGE)?;
    ws.require(STAGE, &ws.train_data(), "gen-data")?;
    ws.require(STAGE, &ws.ae_checkpoint(), "train-ae")?;
    let data = load_dataset(ws.train_data()).map_err(core_err(STAGE))?;
    let ae = AePair::from_checkpoint(&load_checkpoint(ws.ae_checkpoint()).map_err(core_err(STAGE))?)
        .map_err(core_err(STAGE))?;
    let latents = standardized_latents(&ae, &data, STAGE)?;
    let schedule = schedule_from(cfg, STAGE)?;
    let e = cfg_err(STAGE);
    let config = DiffTrainConfig {
        steps: cfg.get_usize("diff.steps").map_err(&e)?,
        batch_size: cfg.get_usize("diff.batch_size").map_err(&e)?,
        hidden: [cfg.get_usize("diff.hidden1").map_err(&e)?, cfg.get_usize("diff.hidden2").map_err(&e)?],
        lr: cfg.get_f64("diff.lr").map_err(&e)?,
        lr_min: cfg.get_f64("diff.lr_min").map_err(&e)?,
        weight_decay: cfg.get_f64("diff.weight_decay").map_err(&e)?,
        p_drop: cfg.get_f64("diff.p_drop").map_err(&e)?,
    };
    let (denoiser, embedder, history) =
        train_denoiser(&latents, &schedule, &config, stage_seed(cfg, STAGE, "diff")?).map_err(core_err(STAGE))?;
    save_checkpoint(
        &diffusion_to_checkpoint(&denoiser, &embedder).map_err(core_err(STAGE))?,
        ws.diff_checkpoint(),
    )
    .map_err(core_err(STAGE))?;
    write_file(STAGE, &ws.loss_csv("diff"), history_csv("step", &history).as_bytes())?;
    ws.write_manifest(STAGE, cfg, &[&ws.train_data(), &ws.ae_checkpoint()])?;
    if let (Some(first), Some(last)) = (history.first(), history.last()) {
        println!("train-diff: noise-prediction loss {first:.4} -> {last:.4} over {} steps", history.len());
    }
    Ok(())
}

pub fn train_teacher_stage(cfg: &RunConfig, ws: &Workspace) -> StageResult<()> {
    const STAGE: &str = "train-teacher";
    ws.ensure_out_dir(STAGE)?;
    ws.require(STAGE, &ws.train_data(), "gen-data")?;
    ws.require(STAGE, &ws.test_data(), "gen-data")?;
    let train = load_dataset(ws.train_data()).map_err(core_err(STAGE))?;
    let test = load_dataset(ws.test_data()).map_err(core_err(STAGE))?;
    let config = kd_config(cfg, STAGE, "ttm.teacher_epochs")?;
    let (teacher, history) =
        train_teacher(&train, &config, stage_seed(cfg, STAGE, "teacher")?).map_err(core_err(STAGE))?;
    let acc = evalkit::accuracy(&teacher, &test).map_err(core_err(STAGE))?;
    save_checkpoint(&teacher.to_checkpoint("teacher").map_err(core_err(STAGE))?, ws.teacher_checkpoint())
        .map_err(core_err(STAGE))?;
    write_file(STAGE, &ws.loss_csv("teacher"), history_csv("epoch", &history).as_bytes())?;
    ws.write_manifest(STAGE, cfg, &[&ws.train_data(), &ws.test_data()])?;
    println!("train-teacher: test accuracy {acc:.4} after {} epochs", history.len());
    Ok(())
}

pub fn cluster(cfg: &RunConfig, ws: &Workspace) -> StageResult<()> {
    const STAGE: &str = "cluster";
    ws.ensure_out_dir(STAGE)?;
    ws.require(STAGE, &ws.train_data(), "gen-data")?;
    ws.require(STAGE, &ws.ae_checkpoint(), "train-ae")?;
    let data = load_dataset(ws.train_data()).map_err(core_err(STAGE))?;
    let ae = AePair::from_checkpoint(&load_checkpoint(ws.ae_checkpoint()).map_err(core_err(STAGE))?)
        .map_err(core_err(STAGE))?;
    let latents = standardized_latents(&ae, &data, STAGE)?;
    let e = cfg_err(STAGE);
    let config = KMeansConfig {
        centers_per_category: cfg.get_usize("proto.centers_per_category").map_err(&e)?,
        passes: cfg.get_usize("proto.passes").map_err(&e)?,
        batch_size: cfg.get_usize("proto.batch_size").map_err(&e)?,
    };
    let protos = learn_prototypes(&latents, &config, stage_seed(cfg, STAGE, "proto")?).map_err(core_err(STAGE))?;
    save_checkpoint(&protos.to_checkpoint().map_err(core_err(STAGE))?, ws.protos_checkpoint())
        .map_err(core_err(STAGE))?;
    ws.write_manifest(STAGE, cfg, &[&ws.train_data(), &ws.ae_checkpoint()])?;
    println!("cluster: {} prototypes ({} per category)", protos.len(), protos.centers_per_category());
    Ok(())
}

pub fn synthesize_stage(cfg: &RunConfig, ws: &Workspace, random_init: bool) -> StageResult<()> {
    const STAGE: &str = "synthesize";
    ws.ensure_out_dir(STAGE)?;
    ws.require(STAGE, &ws.train_data(), "gen-data")?;
    ws.require(STAGE, &ws.ae_checkpoint(), "train-ae")?;
    ws.require(STAGE, &ws.diff_checkpoint(), "train-diff")?;
    let template = load_dataset(ws.train_data()).map_err(core_err(STAGE))?;
    let ae = AePair::from_checkpoint(&load_checkpoint(ws.ae_checkpoint()).map_err(core_err(STAGE))?)
        .map_err(core_err(STAGE))?;
    let (denoiser, embedder) =
        diffusion_from_checkpoint(&load_checkpoint(ws.diff_checkpoint()).map_err(core_err(STAGE))?)
            .map_err(core_err(STAGE))?;
    let schedule = schedule_from(cfg, STAGE)?;
    let config = distill_config(cfg, STAGE)?;

    let mut inputs = vec![ws.train_data(), ws.ae_checkpoint(), ws.diff_checkpoint()];
    let distilled = if random_init {
        let (d, _) = distill_random_init(&template, &ae, &denoiser, &embedder, &schedule, &config)
            .map_err(core_err(STAGE))?;
        d
    } else {
        ws.require(STAGE, &ws.protos_checkpoint(), "cluster")?;
        inputs.push(ws.protos_checkpoint());
        let protos = PrototypeSet::from_checkpoint(&load_checkpoint(ws.protos_checkpoint()).map_err(core_err(STAGE))?)
            .map_err(core_err(STAGE))?;
        synthesize(&protos, &template, &ae, &denoiser, &embedder, &schedule, &config).map_err(core_err(STAGE))?
    };

    save_dataset(&distilled.dataset, ws.distilled_data()).map_err(core_err(STAGE))?;
    write_file(STAGE, &ws.provenance(), distilled.provenance_csv().as_bytes())?;
    std::fs::create_dir_all(ws.dumps_dir())
        .map_err(|e| StageError::new(STAGE, format!("cannot create dumps dir: {e}")))?;
    for i in 0..distilled.dataset.len() {
        let cat = distilled.dataset.labels[i] as usize;
        let name = format!("img_{i:03}_{}.pgm", distilled.dataset.category_names[cat]);
        dump_image(&distilled.dataset, i, ws.dumps_dir().join(name)).map_err(core_err(STAGE))?;
    }
    let input_refs: Vec<&std::path::Path> = inputs.iter().map(|p| p.as_path()).collect();
    ws.write_manifest(STAGE, cfg, &input_refs)?;
    println!(
        "synthesize: {} distilled images ({}){}",
        distilled.dataset.len(),
        ws.distilled_data().display(),
        if random_init { " [random-init ablation]" } else { "" }
    );
    Ok(())
}

pub fn train_student_stage(cfg: &RunConfig, ws: &Workspace, hard_labels: bool) -> StageResult<()> {
    const STAGE: &str = "train-student";
    ws.ensure_out_dir(STAGE)?;
    ws.require(STAGE, &ws.distilled_data(), "synthesize")?;
    let distilled = load_dataset(ws.distilled_data()).map_err(core_err(STAGE))?;
    let config = kd_config(cfg, STAGE, "ttm.epochs")?;
    let seed = stage_seed(cfg, STAGE, "student")?;

    let mut inputs = vec![ws.distilled_data()];
    let (student, history) = if hard_labels {
        train_student_hard(&distilled, &config, seed).map_err(core_err(STAGE))?
    } else {
        ws.require(STAGE, &ws.teacher_checkpoint(), "train-teacher")?;
        inputs.push(ws.teacher_checkpoint());
        let teacher =
            ClassifierNet::from_checkpoint(&load_checkpoint(ws.teacher_checkpoint()).map_err(core_err(STAGE))?, "teacher")
                .map_err(core_err(STAGE))?;
        train_student(&distilled, &teacher, &config, seed).map_err(core_err(STAGE))?
    };

    save_checkpoint(&student.to_checkpoint("student").map_err(core_err(STAGE))?, ws.student_checkpoint())
        .map_err(core_err(STAGE))?;
    write_file(STAGE, &ws.loss_csv("student"), history_csv("epoch", &history).as_bytes())?;
    let input_refs: Vec<&std::path::Path> = inputs.iter().map(|p| p.as_path()).collect();
    ws.write_manifest(STAGE, cfg, &input_refs)?;
    if let (Some(first), Some(last)) = (history.first(), history.last()) {
        println!(
            "train-student: {} loss {first:.5} -> {last:.5} over {} epochs",
            if hard_labels { "cross-entropy" } else { "distillation" },
            history.len()
        );
    }
    Ok(())
}

pub fn evaluate(cfg: &RunConfig, ws: &Workspace) -> StageResult<()> {
    const STAGE: &str = "evaluate";
    ws.ensure_out_dir(STAGE)?;
    ws.require(STAGE, &ws.student_checkpoint(), "train-student")?;
    ws.require(STAGE, &ws.teacher_checkpoint(), "train-teacher")?;
    ws.require(STAGE, &ws.test_data(), "gen-data")?;
    ws.require(STAGE, &ws.distilled_data(), "synthesize")?;

    let student = ClassifierNet::from_checkpoint(&load_checkpoint(ws.student_checkpoint()).map_err(core_err(STAGE))?, "student")
        .map_err(core_err(STAGE))?;
    let teacher = ClassifierNet::from_checkpoint(&load_checkpoint(ws.teacher_checkpoint()).map_err(core_err(STAGE))?, "teacher")
        .map_err(core_err(STAGE))?;
    let test = load_dataset(ws.test_data()).map_err(core_err(STAGE))?;
    let distilled = load_dataset(ws.distilled_data()).map_err(core_err(STAGE))?;

    let student_acc = evalkit::accuracy(&student, &test).map_err(core_err(STAGE))?;
    let teacher_acc = evalkit::accuracy(&teacher, &test).map_err(core_err(STAGE))?;
    let splits = cfg.get_usize("eval.is_splits").map_err(cfg_err(STAGE))?;
    let is = evalkit::inception_score(&teacher, &distilled.to_unit_rows(), splits).map_err(core_err(STAGE))?;
    let real_stats = evalkit::feature_stats(&teacher, &test.to_unit_rows()).map_err(core_err(STAGE))?;
    let distilled_stats = evalkit::feature_stats(&teacher, &distilled.to_unit_rows()).map_err(core_err(STAGE))?;
    let fid = evalkit::frechet_distance(&real_stats, &distilled_stats).map_err(core_err(STAGE))?;

    // Per-category accuracies feed the two-sample test; both samples being
    // constant (e.g. two perfect nets) makes the test undefined.
    let student_cats = per_category_accuracy(&student, &test).map_err(core_err(STAGE))?;
    let teacher_cats = per_category_accuracy(&teacher, &test).map_err(core_err(STAGE))?;
    let ttest = evalkit::welch_ttest(&student_cats, &teacher_cats).ok();

    let mut metrics = String::from("metric,value\n");
    let _ = writeln!(metrics, "student_test_accuracy,{student_acc}");
    let _ = writeln!(metrics, "teacher_test_accuracy,{teacher_acc}");
    let _ = writeln!(metrics, "inception_score,{is}");
    let _ = writeln!(metrics, "fid_test_vs_distilled,{fid}");
    if let Some((t, p)) = ttest {
        let _ = writeln!(metrics, "ttest_t,{t}");
        let _ = writeln!(metrics, "ttest_p,{p}");
    }
    write_file(STAGE, &ws.metrics(), metrics.as_bytes())?;

    let mut report = String::new();
    let _ = writeln!(report, "evaluation report");
    let _ = writeln!(report, "=================");
    let _ = writeln!(report, "student test accuracy : {student_acc:.4}");
    let _ = writeln!(report, "teacher test accuracy : {teacher_acc:.4}");
    let _ = writeln!(report, "inception score       : {is:.4} (bounds 1..={})", test.num_categories());
    let _ = writeln!(report, "frechet distance      : {fid:.4} (teacher features, test vs distilled)");
    match ttest {
        Some((t, p)) => {
            let _ = writeln!(report, "welch t-test          : t = {t:.4}, p = {p:.4}");
            let _ = writeln!(report, "  (per-category accuracy, student vs teacher)");
        }
        None => {
            let _ = writeln!(report, "welch t-test          : skipped (zero variance in both samples)");
        }
    }
    write_file(STAGE, &ws.report(), report.as_bytes())?;
    ws.write_manifest(
        STAGE,
        cfg,
        &[&ws.student_checkpoint(), &ws.teacher_checkpoint(), &ws.test_data(), &ws.distilled_data()],
    )?;
    print!("{report}");
    Ok(())
}

fn per_category_accuracy(
    net: &ClassifierNet,
    data: &d4m_core::dataio::ImageDataset,
) -> d4m_core::Result<Vec<f64>> {
    let logits = net.logits(&data.to_unit_rows());
    let k = logits.width();
    let mut hits = vec![0usize; data.num_categories()];
    let mut totals = vec![0usize; data.num_categories()];
    for (row, &label) in logits.data.chunks_exact(k).zip(&data.labels) {
        totals[label as usize] += 1;
        if d4m_core::numerics::kernels::argmax(row) == label as usize {
            hits[label as usize] += 1;
        }
    }
    Ok(hits.iter().zip(&totals).map(|(&h, &t)| h as f64 / t.max(1) as f64).collect())
}

/// Run every stage in order from one configuration.
pub fn pipeline(cfg: &RunConfig, ws: &Workspace) -> StageResult<()> {
    gen_data(cfg, ws)?;
    train_ae(cfg, ws)?;
    train_diff(cfg, ws)?;
    train_teacher_stage(cfg, ws)?;
    cluster(cfg, ws)?;
    synthesize_stage(cfg, ws, false)?;
    train_student_stage(cfg, ws, false)?;
    evaluate(cfg, ws)
}
