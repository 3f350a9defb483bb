//! Evaluation harness: control separability, cell-line classification,
//! the statistics baseline and zero-shot transfer.

mod baseline;

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

pub use baseline::{baseline_features, baseline_featurizer, channel_statistics, QUANTILES};

use crate::autograd::Tensor;
use crate::gan::{extract_features, GanError, ModelState};
use crate::rng;
use crate::screen::{drop_channel, Group, ScreenError, WellRecord};
use crate::svm::{accuracy, confusion_matrix, fit, fit_multiclass, MetricsError, SvmConfig, SvmError};

pub const TEST_FRACTION: f64 = 0.2;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error(transparent)]
    Svm(#[from] SvmError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Gan(#[from] GanError),
    #[error(transparent)]
    Screen(#[from] ScreenError),
    #[error("split: {0}")]
    Split(String),
    #[error("{0}")]
    Mismatch(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitDescriptor {
    pub seed: u64,
    pub test_fraction: f64,
    pub train_well_ids: Vec<String>,
    pub test_well_ids: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: String,
    pub accuracy: f64,
    /// Indexed `[true][predicted]` in the order of `classes`.
    pub confusion: Vec<Vec<usize>>,
    pub classes: Vec<String>,
    pub split: SplitDescriptor,
    pub featurizer: String,
}

impl EvalReport {
    /// Confusion matrix as CSV, rows are true classes.
    pub fn confusion_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["true\\predicted".to_string()];
        header.extend(self.classes.iter().cloned());
        w.write_record(&header).expect("in-memory write");
        for (name, row) in self.classes.iter().zip(&self.confusion) {
            let mut rec = vec![name.clone()];
            rec.extend(row.iter().map(|c| c.to_string()));
            w.write_record(&rec).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
    }
}

/// Per class, a seeded shuffle puts `round(TEST_FRACTION * n)` samples
/// (at least one, leaving at least one) in the test set. Returns sorted
/// `(train, test)` indices.
pub fn stratified_split(labels: &[usize], seed: u64) -> Result<(Vec<usize>, Vec<usize>), EvalError> {
    let classes: BTreeSet<usize> = labels.iter().copied().collect();
    let mut r = rng::stream(seed, &[rng::tag("split")]);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for c in classes {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        if idx.len() < 2 {
            return Err(EvalError::Split(format!("class {c} has {} sample(s), need 2", idx.len())));
        }
        idx.shuffle(&mut r);
        let n_test = ((idx.len() as f64 * TEST_FRACTION).round() as usize).clamp(1, idx.len() - 1);
        test.extend_from_slice(&idx[..n_test]);
        train.extend_from_slice(&idx[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Fits on a stratified split of `xs` and reports held-out accuracy.
/// Two classes use one binary fit; more use one-vs-rest.
#[allow(clippy::too_many_arguments)]
pub fn classify(
    task: &str,
    featurizer: &str,
    xs: &[Vec<f64>],
    labels: &[usize],
    classes: &[String],
    well_ids: &[String],
    split_seed: u64,
    svm: &SvmConfig,
) -> Result<EvalReport, EvalError> {
    if xs.len() != labels.len() || xs.len() != well_ids.len() {
        return Err(EvalError::Mismatch(format!(
            "{} embeddings, {} labels, {} well ids",
            xs.len(),
            labels.len(),
            well_ids.len()
        )));
    }
    let k = classes.len();
    if let Some(missing) = (0..k).find(|c| !labels.contains(c)) {
        return Err(EvalError::Split(format!("class {} has no samples", classes[missing])));
    }
    let (train, test) = stratified_split(labels, split_seed)?;
    let pick = |idx: &[usize]| -> (Vec<Vec<f64>>, Vec<usize>) {
        (idx.iter().map(|&i| xs[i].clone()).collect(), idx.iter().map(|&i| labels[i]).collect())
    };
    let (x_train, y_train) = pick(&train);
    let (x_test, y_test) = pick(&test);
    let pred: Vec<usize> = if k == 2 {
        let y: Vec<i8> = y_train.iter().map(|&c| if c == 1 { 1 } else { -1 }).collect();
        let m = fit(&x_train, &y, svm)?.model;
        m.predict(&x_test)?.into_iter().map(|p| usize::from(p == 1)).collect()
    } else {
        fit_multiclass(&x_train, &y_train, k, svm)?.predict(&x_test)?
    };
    Ok(EvalReport {
        task: task.to_string(),
        accuracy: accuracy(&y_test, &pred)?,
        confusion: confusion_matrix(&y_test, &pred, k)?,
        classes: classes.to_vec(),
        split: SplitDescriptor {
            seed: split_seed,
            test_fraction: TEST_FRACTION,
            train_well_ids: train.iter().map(|&i| well_ids[i].clone()).collect(),
            test_well_ids: test.iter().map(|&i| well_ids[i].clone()).collect(),
        },
        featurizer: featurizer.to_string(),
    })
}

fn check_lengths(xs: &[Vec<f64>], records: &[WellRecord]) -> Result<(), EvalError> {
    if xs.len() != records.len() {
        return Err(EvalError::Mismatch(format!("{} embeddings for {} wells", xs.len(), records.len())));
    }
    Ok(())
}

/// C+ vs C- on control wells, optionally restricted to one cell line.
pub fn controls_classification(
    xs: &[Vec<f64>],
    records: &[WellRecord],
    cell_line: Option<&str>,
    split_seed: u64,
    svm: &SvmConfig,
    featurizer: &str,
) -> Result<EvalReport, EvalError> {
    check_lengths(xs, records)?;
    let (mut fx, mut labels, mut ids) = (Vec::new(), Vec::new(), Vec::new());
    for (r, x) in records.iter().zip(xs) {
        if !r.group.is_control() || cell_line.is_some_and(|l| l != r.cell_line) {
            continue;
        }
        fx.push(x.clone());
        labels.push(usize::from(r.group == Group::PosCtrl));
        ids.push(r.well_id.clone());
    }
    let task = match cell_line {
        Some(l) => format!("controls:{l}"),
        None => "controls".to_string(),
    };
    let classes = vec![Group::NegCtrl.as_str().to_string(), Group::PosCtrl.as_str().to_string()];
    classify(&task, featurizer, &fx, &labels, &classes, &ids, split_seed, svm)
}

/// Cell-line identity on control wells; classes are the sorted line names.
pub fn cell_line_classification(
    xs: &[Vec<f64>],
    records: &[WellRecord],
    split_seed: u64,
    svm: &SvmConfig,
    featurizer: &str,
) -> Result<EvalReport, EvalError> {
    check_lengths(xs, records)?;
    let classes: Vec<String> = records
        .iter()
        .filter(|r| r.group.is_control())
        .map(|r| r.cell_line.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if classes.len() < 2 {
        return Err(EvalError::Split(format!("need at least 2 cell lines, found {}", classes.len())));
    }
    let (mut fx, mut labels, mut ids) = (Vec::new(), Vec::new(), Vec::new());
    for (r, x) in records.iter().zip(xs) {
        if !r.group.is_control() {
            continue;
        }
        fx.push(x.clone());
        labels.push(classes.iter().position(|c| *c == r.cell_line).expect("collected above"));
        ids.push(r.well_id.clone());
    }
    classify("cell_line", featurizer, &fx, &labels, &classes, &ids, split_seed, svm)
}

/// Drops `dropped_channel` (if any) and checks the result has `channels` channels.
pub fn adapt_images(images: &[Tensor], dropped_channel: Option<usize>, channels: usize) -> Result<Vec<Tensor>, EvalError> {
    images
        .iter()
        .enumerate()
        .map(|(i, img)| {
            let img = match dropped_channel {
                Some(c) => drop_channel(img, c)?,
                None => img.clone(),
            };
            if img.shape().first() != Some(&channels) {
                return Err(EvalError::Mismatch(format!(
                    "image {i} has {} channels after dropping, model expects {channels}",
                    img.shape().first().copied().unwrap_or(0)
                )));
            }
            Ok(img)
        })
        .collect()
}

fn check_classes(records: &[WellRecord], k_classes: usize) -> Result<(), EvalError> {
    let found: BTreeSet<&str> = records
        .iter()
        .filter(|r| r.group.is_control())
        .map(|r| r.cell_line.as_str())
        .collect();
    if found.len() != k_classes {
        return Err(EvalError::Mismatch(format!(
            "expected {k_classes} cell lines, manifest has {}",
            found.len()
        )));
    }
    Ok(())
}

/// Cell-type classification on a screen the checkpoint never saw, using
/// the frozen critic's features.
pub fn zero_shot_eval(
    state: &ModelState,
    records: &[WellRecord],
    images: &[Tensor],
    dropped_channel: Option<usize>,
    k_classes: usize,
    split_seed: u64,
    svm: &SvmConfig,
) -> Result<EvalReport, EvalError> {
    check_classes(records, k_classes)?;
    let imgs = adapt_images(images, dropped_channel, state.config.channels)?;
    let xs = extract_features(&state.config, &state.critic, &imgs)?;
    let mut rep = cell_line_classification(&xs, records, split_seed, svm, "critic")?;
    rep.task = "zero_shot".into();
    Ok(rep)
}

/// [`zero_shot_eval`] with the statistics baseline in place of the critic.
#[allow(clippy::too_many_arguments)]
pub fn zero_shot_eval_baseline(
    records: &[WellRecord],
    images: &[Tensor],
    dropped_channel: Option<usize>,
    channels: usize,
    k_classes: usize,
    feature_dim: usize,
    baseline_seed: u64,
    split_seed: u64,
    svm: &SvmConfig,
) -> Result<EvalReport, EvalError> {
    check_classes(records, k_classes)?;
    let imgs = adapt_images(images, dropped_channel, channels)?;
    let xs = baseline_features(&imgs, baseline_seed, feature_dim);
    let mut rep = cell_line_classification(&xs, records, split_seed, svm, "baseline")?;
    rep.task = "zero_shot".into();
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(i: usize, line: &str, group: Group) -> WellRecord {
        WellRecord {
            well_id: format!("{line}-{i}"),
            cell_line: line.into(),
            group,
            compound: String::new(),
            concentration_um: 0.0,
            replicate: i as u32 + 1,
            image_path: format!("{line}-{i}.img"),
        }
    }

    fn controls() -> Vec<WellRecord> {
        let mut out = Vec::new();
        for line in ["a", "b"] {
            for i in 0..10 {
                out.push(rec(i, line, if i % 2 == 0 { Group::PosCtrl } else { Group::NegCtrl }));
            }
        }
        out
    }

    #[test]
    fn split_is_stratified_and_disjoint() {
        let labels: Vec<usize> = (0..25).map(|i| usize::from(i % 5 == 0)).collect();
        let (tr, te) = stratified_split(&labels, 3).unwrap();
        assert_eq!(tr.len() + te.len(), 25);
        assert!(tr.iter().all(|i| !te.contains(i)));
        assert_eq!(te.iter().filter(|&&i| labels[i] == 1).count(), 1);
        assert_eq!(te.iter().filter(|&&i| labels[i] == 0).count(), 4);
        assert_eq!(stratified_split(&labels, 3).unwrap(), (tr, te));
        assert!(stratified_split(&[0, 1, 1], 0).is_err());
    }

    #[test]
    fn one_hot_features_are_perfect() {
        let recs = controls();
        let xs: Vec<Vec<f64>> = recs
            .iter()
            .map(|r| if r.group == Group::PosCtrl { vec![1.0, 0.0] } else { vec![0.0, 1.0] })
            .collect();
        let rep = controls_classification(&xs, &recs, None, 1, &SvmConfig::default(), "onehot").unwrap();
        assert_eq!(rep.accuracy, 1.0);
        assert_eq!(rep.split.test_well_ids.len(), 4);
        let lines: Vec<Vec<f64>> = recs
            .iter()
            .map(|r| if r.cell_line == "a" { vec![1.0, 0.0] } else { vec![0.0, 1.0] })
            .collect();
        let rep = cell_line_classification(&lines, &recs, 1, &SvmConfig::default(), "onehot").unwrap();
        assert_eq!(rep.accuracy, 1.0);
        assert_eq!(rep.classes, vec!["a", "b"]);
        let trace: usize = (0..2).map(|i| rep.confusion[i][i]).sum();
        let total: usize = rep.confusion.iter().flatten().sum();
        assert_eq!(rep.accuracy, trace as f64 / total as f64);
        assert!(rep.confusion_csv().starts_with("true\\predicted,a,b\na,"));
    }

    #[test]
    fn per_line_variant_filters() {
        let recs = controls();
        let xs: Vec<Vec<f64>> = recs.iter().map(|r| vec![r.replicate as f64]).collect();
        let rep = controls_classification(&xs, &recs, Some("b"), 1, &SvmConfig::default(), "x").unwrap();
        assert!(rep.split.train_well_ids.iter().chain(&rep.split.test_well_ids).all(|id| id.starts_with("b-")));
    }
}
