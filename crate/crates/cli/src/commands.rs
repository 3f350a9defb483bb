use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde_json::json;
use ssrl_core::autograd::suite::op_cases;
use ssrl_core::autograd::Tensor;
use ssrl_core::axes::{
    curves_csv, dose_response, fit_efficacy_normalization, fit_frame, points_csv, EfficacyNormalization, FrameKind,
    PerturbationFrame,
};
use ssrl_core::eval::{adapt_images, baseline_features, cell_line_classification, controls_classification, EvalReport};
use ssrl_core::gan::regcheck::regularizer_cases;
use ssrl_core::gan::{checkpoint, extract_features, train_until, Dataset, ModelState, StepMetrics};
use ssrl_core::screen::{
    blob, format_concentration, load_images, load_manifest, manifest_bytes, render_screen, Group, WellRecord,
    MANIFEST_FILE,
};
use ssrl_core::svm::Standardizer;

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::io::{embeddings_csv, read_embeddings, write_atomic, RunRecord};
use crate::{AxesKind, Command, Common, Featurizer};

pub const CHECKPOINT_FILE: &str = "checkpoint.gdl";
pub const EMBEDDINGS_FILE: &str = "embeddings.csv";
pub const FRAME_FILE: &str = "frame.json";

pub fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Synth { common, seed } => synth(&common, seed),
        Command::Train { common, screen, steps, seed, resume } => train(&common, screen, steps, seed, resume),
        Command::Embed { common, screen, checkpoint, featurizer } => embed(&common, screen, checkpoint, featurizer),
        Command::FitAxes { common, screen, embeddings, kind } => fit_axes(&common, screen, embeddings, kind),
        Command::Score { common, screen, embeddings, frame } => score(&common, screen, embeddings, frame),
        Command::DoseResponse { common, screen, embeddings, frame } => {
            dose_response_cmd(&common, screen, embeddings, frame)
        }
        Command::EvalControls { common, screen, embeddings, split_seed, standardize } => {
            eval_controls(&common, screen, embeddings, split_seed, standardize)
        }
        Command::EvalZeroshot { common, screen, checkpoint, drop_channel, classes, featurizer, split_seed, standardize } => {
            eval_zeroshot(&common, screen, checkpoint, drop_channel, classes, featurizer, split_seed, standardize)
        }
        Command::Gradcheck { out, seeds } => gradcheck(out.as_deref(), seeds),
    }
}

fn required(flag: Option<PathBuf>, configured: &Option<PathBuf>, what: &str, key: &str) -> Result<PathBuf> {
    flag.or_else(|| configured.clone())
        .ok_or_else(|| CliError::Validation(format!("no {what}: pass --{what} or set paths.{key}")))
}

fn records_of(screen: &Path) -> Result<Vec<WellRecord>> {
    Ok(load_manifest(&screen.join(MANIFEST_FILE))?)
}

fn screen_of(screen: &Path) -> Result<(Vec<WellRecord>, Vec<Tensor>)> {
    let records = records_of(screen)?;
    let images = load_images(screen, &records)?;
    Ok((records, images))
}

fn check_images(images: &[Tensor], channels: usize, side: usize) -> Result<()> {
    let want = [channels, side, side];
    match images.iter().position(|t| t.shape() != want) {
        Some(i) => Err(CliError::Validation(format!(
            "image {i} has shape {:?}, model expects {want:?}",
            images[i].shape()
        ))),
        None => Ok(()),
    }
}

fn load_checkpoint(path: &Path) -> Result<ModelState> {
    Ok(checkpoint::load(path)?)
}

fn cell_lines(records: &[WellRecord]) -> Vec<String> {
    records.iter().map(|r| r.cell_line.clone()).collect::<BTreeSet<_>>().into_iter().collect()
}

fn synth(common: &Common, seed: Option<u64>) -> Result<()> {
    let mut cfg = RunConfig::load(&common.config)?;
    if let Some(s) = seed {
        cfg.screen.seed = s;
    }
    cfg.screen.validate()?;
    let wells = render_screen(&cfg.screen)?;
    let out = &common.out;
    wells
        .par_iter()
        .try_for_each(|w| write_atomic(&out.join(&w.record.image_path), &blob::encode(&w.image)?))?;
    let records: Vec<WellRecord> = wells.into_iter().map(|w| w.record).collect();
    let mut run = RunRecord::new("synth");
    run.artifact(out, MANIFEST_FILE, &manifest_bytes(&records)?)?;
    run.outputs.push("images/".into());
    println!("wrote {} wells to {}", records.len(), out.display());
    run.finish(out, Some(&cfg))
}

fn metrics_csv(rows: &[StepMetrics]) -> Vec<u8> {
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["step", "loss_critic", "loss_generator", "r1", "lipschitz_l1", "ppl", "ppl_running_mean"])
        .expect("in-memory write");
    for m in rows {
        w.write_record([
            m.step.to_string(),
            m.loss_critic.to_string(),
            m.loss_generator.to_string(),
            opt(m.r1),
            opt(m.lipschitz_l1),
            opt(m.ppl),
            m.ppl_running_mean.to_string(),
        ])
        .expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

fn train(common: &Common, screen: Option<PathBuf>, steps: Option<u64>, seed: Option<u64>, resume: Option<PathBuf>) -> Result<()> {
    let mut cfg = RunConfig::load(&common.config)?;
    if let Some(s) = steps {
        cfg.gan.steps = s;
    }
    if let Some(s) = seed {
        cfg.gan.seed = s;
    }
    cfg.gan.validate()?;
    let screen = required(screen, &cfg.paths.screen, "screen", "screen")?;
    let (_, images) = screen_of(&screen)?;
    check_images(&images, cfg.gan.channels, cfg.gan.image_size)?;
    let data = Dataset::new(images)?;
    let mut run = RunRecord::new("train");
    run.input("screen", &screen);
    let mut state = match &resume {
        Some(path) => {
            let mut st = load_checkpoint(path)?;
            let mut theirs = st.config.clone();
            theirs.steps = cfg.gan.steps;
            if theirs != cfg.gan {
                return Err(CliError::Validation(format!(
                    "{}: checkpoint was trained with a different gan config",
                    path.display()
                )));
            }
            st.config.steps = cfg.gan.steps;
            run.input("resume", path);
            st
        }
        None => ModelState::init(cfg.gan.clone())?,
    };
    let mut rows = Vec::new();
    train_until(&mut state, &data, cfg.gan.steps, |m| {
        if (m.step + 1) % 100 == 0 {
            println!("step {} loss_critic {:.4} loss_generator {:.4}", m.step + 1, m.loss_critic, m.loss_generator);
        }
        rows.push(m.clone());
    })?;
    let out = &common.out;
    run.artifact(out, CHECKPOINT_FILE, &checkpoint::to_bytes(&state))?;
    run.artifact(out, "metrics.csv", &metrics_csv(&rows))?;
    println!("trained to step {}; checkpoint {}", state.step, out.join(CHECKPOINT_FILE).display());
    run.finish(out, Some(&cfg))
}

fn featurize(
    cfg: &RunConfig,
    featurizer: Featurizer,
    checkpoint: Option<PathBuf>,
    images: &[Tensor],
    dropped: Option<usize>,
    run: &mut RunRecord,
) -> Result<(Vec<Vec<f64>>, &'static str)> {
    match featurizer {
        Featurizer::Critic => {
            let path = required(checkpoint, &cfg.paths.checkpoint, "checkpoint", "checkpoint")?;
            let state = load_checkpoint(&path)?;
            run.input("checkpoint", &path);
            let c = &state.config;
            let images = adapt_images(images, dropped, c.channels)?;
            check_images(&images, c.channels, c.image_size)?;
            Ok((extract_features(c, &state.critic, &images)?, "critic"))
        }
        Featurizer::Baseline => {
            let channels = images.first().map_or(0, |t| t.shape()[0]) - usize::from(dropped.is_some());
            let images = adapt_images(images, dropped, channels)?;
            Ok((baseline_features(&images, cfg.eval.baseline_seed, cfg.eval.baseline_dim), "baseline"))
        }
    }
}

fn embed(common: &Common, screen: Option<PathBuf>, checkpoint: Option<PathBuf>, featurizer: Featurizer) -> Result<()> {
    let cfg = RunConfig::load(&common.config)?;
    let screen = required(screen, &cfg.paths.screen, "screen", "screen")?;
    let (records, images) = screen_of(&screen)?;
    let mut run = RunRecord::new("embed");
    run.input("screen", &screen);
    let (xs, name) = featurize(&cfg, featurizer, checkpoint, &images, None, &mut run)?;
    run.artifact(&common.out, EMBEDDINGS_FILE, &embeddings_csv(&records, &xs))?;
    println!("embedded {} wells with the {name} featurizer", xs.len());
    run.finish(&common.out, Some(&cfg))
}

/// Records, embeddings and the paths they came from.
fn embedded_screen(cfg: &RunConfig, screen: Option<PathBuf>, embeddings: Option<PathBuf>, run: &mut RunRecord) -> Result<(Vec<WellRecord>, Vec<Vec<f64>>)> {
    let screen = required(screen, &cfg.paths.screen, "screen", "screen")?;
    let embeddings = required(embeddings, &cfg.paths.embeddings, "embeddings", "embeddings")?;
    let records = records_of(&screen)?;
    let xs = read_embeddings(&embeddings, &records)?;
    run.input("screen", &screen);
    run.input("embeddings", &embeddings);
    Ok((records, xs))
}

fn fit_axes(common: &Common, screen: Option<PathBuf>, embeddings: Option<PathBuf>, kind: AxesKind) -> Result<()> {
    let cfg = RunConfig::load(&common.config)?;
    let mut run = RunRecord::new("fit-axes");
    let (records, xs) = embedded_screen(&cfg, screen, embeddings, &mut run)?;
    let controls: Vec<usize> = (0..records.len()).filter(|&i| records[i].group.is_control()).collect();
    let (labels, frame_kind): (Vec<i8>, FrameKind) = match kind {
        AxesKind::Effectiveness => (
            controls.iter().map(|&i| if records[i].group == Group::PosCtrl { 1 } else { -1 }).collect(),
            FrameKind::Effectiveness,
        ),
        AxesKind::CellLine => {
            let lines = cell_lines(&records);
            if lines.len() != 2 {
                return Err(CliError::Validation(format!("cell-line axes need exactly 2 cell lines, found {}", lines.len())));
            }
            (
                controls.iter().map(|&i| if records[i].cell_line == lines[1] { 1 } else { -1 }).collect(),
                FrameKind::CellLine,
            )
        }
    };
    let cx: Vec<Vec<f64>> = controls.iter().map(|&i| xs[i].clone()).collect();
    let frame = fit_frame(&cx, &labels, frame_kind, &cfg.svm)?;
    let points = frame.project_wells(&records, &xs)?;
    let out = &common.out;
    run.json_artifact(out, FRAME_FILE, &frame)?;
    run.artifact(out, "points.csv", points_csv(&points).as_bytes())?;
    println!("fitted {:?} frame on {} control wells", frame_kind, cx.len());
    run.finish(out, Some(&cfg))
}

fn load_frame(cfg: &RunConfig, frame: Option<PathBuf>, run: &mut RunRecord) -> Result<PerturbationFrame> {
    let path = required(frame, &cfg.paths.frame, "frame", "frame")?;
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    run.input("frame", &path);
    serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

fn normalizations(frame: &PerturbationFrame, records: &[WellRecord], xs: &[Vec<f64>]) -> Result<Vec<EfficacyNormalization>> {
    cell_lines(records)
        .iter()
        .map(|l| Ok(fit_efficacy_normalization(frame, records, xs, l)?))
        .collect()
}

fn score(common: &Common, screen: Option<PathBuf>, embeddings: Option<PathBuf>, frame: Option<PathBuf>) -> Result<()> {
    let cfg = RunConfig::load(&common.config)?;
    let mut run = RunRecord::new("score");
    let (records, xs) = embedded_screen(&cfg, screen, embeddings, &mut run)?;
    let frame = load_frame(&cfg, frame, &mut run)?;
    let norms = normalizations(&frame, &records, &xs)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["well_id", "cell_line", "group", "compound", "concentration_um", "on_raw", "efficacy"])
        .expect("in-memory write");
    for (r, x) in records.iter().zip(&xs) {
        let norm = norms.iter().find(|n| n.cell_line == r.cell_line).expect("one per line");
        let on = frame.project(x)?.0;
        w.write_record([
            r.well_id.as_str(),
            &r.cell_line,
            r.group.as_str(),
            &r.compound,
            &format_concentration(r.concentration_um),
            &on.to_string(),
            &norm.score(on).to_string(),
        ])
        .expect("in-memory write");
    }
    let out = &common.out;
    run.artifact(out, "scores.csv", &w.into_inner().expect("in-memory flush"))?;
    run.json_artifact(out, "normalization.json", &norms)?;
    println!("scored {} wells", records.len());
    run.finish(out, Some(&cfg))
}

fn dose_response_cmd(common: &Common, screen: Option<PathBuf>, embeddings: Option<PathBuf>, frame: Option<PathBuf>) -> Result<()> {
    let cfg = RunConfig::load(&common.config)?;
    let mut run = RunRecord::new("dose-response");
    let (records, xs) = embedded_screen(&cfg, screen, embeddings, &mut run)?;
    let frame = load_frame(&cfg, frame, &mut run)?;
    let norms = normalizations(&frame, &records, &xs)?;
    let curves = dose_response(&records, &xs, &frame, &norms)?;
    let out = &common.out;
    run.artifact(out, "curves.csv", curves_csv(&curves).as_bytes())?;
    run.json_artifact(out, "curves.json", &curves)?;
    for c in &curves {
        let eff = c.effective_at.map_or("none".to_string(), format_concentration);
        println!("{} {} effective_at {eff}", c.cell_line, c.compound);
    }
    run.finish(out, Some(&cfg))
}

fn standardized(xs: Vec<Vec<f64>>, on: bool) -> Result<Vec<Vec<f64>>> {
    if !on {
        return Ok(xs);
    }
    Ok(Standardizer::fit(&xs)?.apply(&xs))
}

fn write_report(run: &mut RunRecord, out: &Path, stem: &str, rep: &EvalReport) -> Result<()> {
    run.artifact(out, &format!("{stem}.confusion.csv"), rep.confusion_csv().as_bytes())?;
    println!("{} accuracy {:.4} ({})", rep.task, rep.accuracy, rep.featurizer);
    Ok(())
}

fn eval_controls(common: &Common, screen: Option<PathBuf>, embeddings: Option<PathBuf>, split_seed: Option<u64>, standardize: bool) -> Result<()> {
    let mut cfg = RunConfig::load(&common.config)?;
    if let Some(s) = split_seed {
        cfg.eval.split_seed = s;
    }
    cfg.eval.standardize |= standardize;
    let mut run = RunRecord::new("eval-controls");
    let (records, xs) = embedded_screen(&cfg, screen, embeddings, &mut run)?;
    let xs = standardized(xs, cfg.eval.standardize)?;
    let name = "embeddings";
    let (seed, svm, out) = (cfg.eval.split_seed, &cfg.svm, &common.out);
    let mut reports = BTreeMap::new();
    reports.insert("controls".to_string(), controls_classification(&xs, &records, None, seed, svm, name)?);
    let lines = cell_lines(&records);
    for l in &lines {
        reports.insert(format!("controls_{l}"), controls_classification(&xs, &records, Some(l), seed, svm, name)?);
    }
    if lines.len() >= 2 {
        reports.insert("cell_line".to_string(), cell_line_classification(&xs, &records, seed, svm, name)?);
    }
    for (stem, rep) in &reports {
        write_report(&mut run, out, stem, rep)?;
    }
    run.json_artifact(out, "eval_controls.json", &json!({ "standardize": cfg.eval.standardize, "reports": reports }))?;
    run.finish(out, Some(&cfg))
}

#[allow(clippy::too_many_arguments)]
fn eval_zeroshot(
    common: &Common,
    screen: Option<PathBuf>,
    checkpoint: Option<PathBuf>,
    drop_channel: Option<usize>,
    classes: Option<usize>,
    featurizer: Featurizer,
    split_seed: Option<u64>,
    standardize: bool,
) -> Result<()> {
    let mut cfg = RunConfig::load(&common.config)?;
    if let Some(s) = split_seed {
        cfg.eval.split_seed = s;
    }
    if drop_channel.is_some() {
        cfg.eval.dropped_channel = drop_channel;
    }
    if let Some(k) = classes {
        cfg.eval.zero_shot_classes = k;
    }
    cfg.eval.standardize |= standardize;
    cfg.validate()?;
    let screen = required(screen, &cfg.paths.foreign_screen, "screen", "foreign_screen")?;
    let (records, images) = screen_of(&screen)?;
    let mut run = RunRecord::new("eval-zeroshot");
    run.input("screen", &screen);
    let found = cell_lines(&records).len();
    if found != cfg.eval.zero_shot_classes {
        return Err(CliError::Validation(format!(
            "expected {} cell lines, screen has {found}",
            cfg.eval.zero_shot_classes
        )));
    }
    let (xs, name) = featurize(&cfg, featurizer, checkpoint, &images, cfg.eval.dropped_channel, &mut run)?;
    let xs = standardized(xs, cfg.eval.standardize)?;
    let mut rep = cell_line_classification(&xs, &records, cfg.eval.split_seed, &cfg.svm, name)?;
    rep.task = "zero_shot".into();
    let out = &common.out;
    write_report(&mut run, out, "zero_shot", &rep)?;
    run.json_artifact(out, "zero_shot.json", &rep)?;
    run.finish(out, Some(&cfg))
}

fn gradcheck(out: Option<&Path>, seeds: u64) -> Result<()> {
    if seeds == 0 {
        return Err(CliError::Validation("--seeds must be positive".into()));
    }
    // name -> (worst error, tolerance, cases, passed)
    let mut table: BTreeMap<&'static str, (f64, f64, usize, bool)> = BTreeMap::new();
    let mut order = Vec::new();
    for seed in 0..seeds {
        for case in op_cases(seed).into_iter().chain(regularizer_cases(seed)) {
            let (ok, rep) = case
                .passes()
                .map_err(|e| CliError::Runtime(format!("gradcheck {}: {e}", case.name)))?;
            let e = table.entry(case.name).or_insert_with(|| {
                order.push(case.name);
                (0.0, case.tol, 0, true)
            });
            e.0 = e.0.max(rep.max_rel_error);
            e.2 += 1;
            e.3 &= ok;
        }
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["op", "cases", "max_rel_error", "tolerance", "pass"]).expect("in-memory write");
    let mut failed = 0;
    for name in &order {
        let (err, tol, n, ok) = table[name];
        failed += usize::from(!ok);
        println!("{name:<32} {n:>4} cases  max_rel_error {err:.3e}  tol {tol:.0e}  {}", if ok { "ok" } else { "FAIL" });
        w.write_record([name.to_string(), n.to_string(), err.to_string(), tol.to_string(), ok.to_string()])
            .expect("in-memory write");
    }
    if let Some(out) = out {
        let mut run = RunRecord::new("gradcheck");
        run.artifact(out, "gradcheck.csv", &w.into_inner().expect("in-memory flush"))?;
        run.finish(out, None)?;
    }
    if failed > 0 {
        return Err(CliError::Runtime(format!("gradcheck: {failed} ops exceed their tolerance")));
    }
    Ok(())
}
