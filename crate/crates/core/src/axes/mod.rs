//! On/Off-perturbation geometry derived from a linear SVM hyperplane,
//! efficacy scores and dose-response curves.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::screen::{format_concentration, Group, WellRecord};
use crate::svm::{fit, LinearModel, SvmConfig, SvmError};

#[derive(Debug, thiserror::Error)]
pub enum AxesError {
    #[error(transparent)]
    Svm(#[from] SvmError),
    #[error("degenerate frame: {0}")]
    Degenerate(String),
    #[error("dimension mismatch: {0}")]
    Dim(String),
    #[error("cell line {line} has no {group} wells")]
    MissingGroup { line: String, group: &'static str },
    #[error("no efficacy normalization for cell line {0}")]
    MissingNorm(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FrameKind {
    #[serde(rename = "EFFECTIVENESS")]
    Effectiveness,
    #[serde(rename = "CELL_LINE")]
    CellLine,
}

/// Coordinate system spanned by a separating hyperplane: the On axis is
/// its unit normal, the Off coordinate is the distance from that axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbationFrame {
    pub u: Vec<f64>,
    pub b: f64,
    pub on_min: f64,
    pub on_max: f64,
    pub off_mean: f64,
    pub kind: FrameKind,
}

/// Scaled On and centred Off coordinates of one well.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectedPoint {
    pub well_id: String,
    pub on: f64,
    pub off: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

impl PerturbationFrame {
    /// Builds a frame from a fitted hyperplane; scaling bounds and the Off
    /// centre come from `fitting_set`.
    pub fn from_model(model: &LinearModel, fitting_set: &[Vec<f64>], kind: FrameKind) -> Result<Self, AxesError> {
        let norm = dot(&model.w, &model.w).sqrt();
        if !(norm > 0.0) {
            return Err(AxesError::Degenerate("hyperplane normal is zero".into()));
        }
        let mut frame = Self {
            u: model.w.iter().map(|v| v / norm).collect(),
            b: model.b / norm,
            on_min: 0.0,
            on_max: 0.0,
            off_mean: 0.0,
            kind,
        };
        let mut on_min = f64::INFINITY;
        let mut on_max = f64::NEG_INFINITY;
        let mut off_sum = 0.0;
        for x in fitting_set {
            let (on, off) = frame.project(x)?;
            on_min = on_min.min(on);
            on_max = on_max.max(on);
            off_sum += off;
        }
        if !(on_max > on_min) {
            return Err(AxesError::Degenerate("fitting set has no spread along the On axis".into()));
        }
        frame.on_min = on_min;
        frame.on_max = on_max;
        frame.off_mean = off_sum / fitting_set.len() as f64;
        Ok(frame)
    }

    /// `(on_raw, off_raw)`: signed distance to the hyperplane and the norm of
    /// the component orthogonal to the normal.
    pub fn project(&self, x: &[f64]) -> Result<(f64, f64), AxesError> {
        if x.len() != self.u.len() {
            return Err(AxesError::Dim(format!("frame has {} dims, embedding has {}", self.u.len(), x.len())));
        }
        let along = dot(&self.u, x);
        let off_sq: f64 = x.iter().zip(&self.u).map(|(v, u)| (v - along * u).powi(2)).sum();
        Ok((along + self.b, off_sq.sqrt()))
    }

    /// Min-max scales On to `[-1, 1]` over the fitting set and centres Off.
    /// Values outside the fitting range are not clamped.
    pub fn to_plot_coords(&self, on_raw: f64, off_raw: f64) -> (f64, f64) {
        (
            2.0 * (on_raw - self.on_min) / (self.on_max - self.on_min) - 1.0,
            off_raw - self.off_mean,
        )
    }

    pub fn project_wells(&self, records: &[WellRecord], xs: &[Vec<f64>]) -> Result<Vec<ProjectedPoint>, AxesError> {
        records
            .iter()
            .zip(xs)
            .map(|(r, x)| {
                let (on_raw, off_raw) = self.project(x)?;
                let (on, off) = self.to_plot_coords(on_raw, off_raw);
                Ok(ProjectedPoint { well_id: r.well_id.clone(), on, off })
            })
            .collect()
    }
}

/// Fits an SVM on `xs` with labels in `{-1, +1}` and derives its frame.
pub fn fit_frame(xs: &[Vec<f64>], ys: &[i8], kind: FrameKind, cfg: &SvmConfig) -> Result<PerturbationFrame, AxesError> {
    let model = fit(xs, ys, cfg)?.model;
    PerturbationFrame::from_model(&model, xs, kind)
}

/// Raw On means of a cell line's controls.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EfficacyNormalization {
    pub cell_line: String,
    pub mean_neg: f64,
    pub mean_pos: f64,
}

impl EfficacyNormalization {
    /// Affine score with the negative-control mean at -1 and the positive
    /// mean at +1; 0 is the efficacy threshold.
    pub fn score(&self, on_raw: f64) -> f64 {
        2.0 * (on_raw - self.mean_neg) / (self.mean_pos - self.mean_neg) - 1.0
    }
}

pub fn efficacy_score(norm: &EfficacyNormalization, on_raw: f64) -> f64 {
    norm.score(on_raw)
}

/// Averages the raw On coordinate of `cell_line`'s positive and negative controls.
pub fn fit_efficacy_normalization(
    frame: &PerturbationFrame,
    records: &[WellRecord],
    xs: &[Vec<f64>],
    cell_line: &str,
) -> Result<EfficacyNormalization, AxesError> {
    let mut sums = [(0.0, 0usize); 2];
    for (r, x) in records.iter().zip(xs) {
        if r.cell_line != cell_line {
            continue;
        }
        let slot = match r.group {
            Group::NegCtrl => 0,
            Group::PosCtrl => 1,
            Group::Treated => continue,
        };
        sums[slot].0 += frame.project(x)?.0;
        sums[slot].1 += 1;
    }
    for (slot, group) in [(0, "NEG_CTRL"), (1, "POS_CTRL")] {
        if sums[slot].1 == 0 {
            return Err(AxesError::MissingGroup { line: cell_line.to_string(), group });
        }
    }
    let mean_neg = sums[0].0 / sums[0].1 as f64;
    let mean_pos = sums[1].0 / sums[1].1 as f64;
    if mean_neg == mean_pos {
        return Err(AxesError::Degenerate(format!("{cell_line}: control means coincide")));
    }
    Ok(EfficacyNormalization { cell_line: cell_line.to_string(), mean_neg, mean_pos })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DosePoint {
    pub concentration_um: f64,
    pub mean_efficacy: f64,
    pub n_replicates: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DoseResponseCurve {
    pub compound: String,
    pub cell_line: String,
    /// Sorted by concentration.
    pub points: Vec<DosePoint>,
    /// Lowest concentration whose mean score is above 0.
    pub effective_at: Option<f64>,
}

/// Mean efficacy per (cell line, compound, concentration) over treated wells.
/// Curves come out sorted by cell line, then compound.
pub fn dose_response(
    records: &[WellRecord],
    xs: &[Vec<f64>],
    frame: &PerturbationFrame,
    norms: &[EfficacyNormalization],
) -> Result<Vec<DoseResponseCurve>, AxesError> {
    if records.len() != xs.len() {
        return Err(AxesError::Dim(format!("{} records but {} embeddings", records.len(), xs.len())));
    }
    type Key = (String, String);
    let mut groups: BTreeMap<Key, BTreeMap<u64, (f64, f64, usize)>> = BTreeMap::new();
    for (r, x) in records.iter().zip(xs) {
        if r.group != Group::Treated {
            continue;
        }
        let norm = norms
            .iter()
            .find(|n| n.cell_line == r.cell_line)
            .ok_or_else(|| AxesError::MissingNorm(r.cell_line.clone()))?;
        let score = norm.score(frame.project(x)?.0);
        // Nonnegative floats order like their bit patterns.
        let slot = groups
            .entry((r.cell_line.clone(), r.compound.clone()))
            .or_default()
            .entry(r.concentration_um.to_bits())
            .or_insert((r.concentration_um, 0.0, 0));
        slot.1 += score;
        slot.2 += 1;
    }
    Ok(groups
        .into_iter()
        .map(|((cell_line, compound), by_conc)| {
            let points: Vec<DosePoint> = by_conc
                .into_values()
                .map(|(c, sum, n)| DosePoint { concentration_um: c, mean_efficacy: sum / n as f64, n_replicates: n })
                .collect();
            let effective_at = points.iter().find(|p| p.mean_efficacy > 0.0).map(|p| p.concentration_um);
            DoseResponseCurve { compound, cell_line, points, effective_at }
        })
        .collect())
}

/// `compound,cell_line,concentration_um,mean_efficacy,n`
pub fn curves_csv(curves: &[DoseResponseCurve]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["compound", "cell_line", "concentration_um", "mean_efficacy", "n"])
        .expect("in-memory write");
    for c in curves {
        for p in &c.points {
            w.write_record([
                c.compound.as_str(),
                c.cell_line.as_str(),
                &format_concentration(p.concentration_um),
                &format!("{}", p.mean_efficacy),
                &p.n_replicates.to_string(),
            ])
            .expect("in-memory write");
        }
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

/// `well_id,on,off`
pub fn points_csv(points: &[ProjectedPoint]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["well_id", "on", "off"]).expect("in-memory write");
    for p in points {
        w.write_record([p.well_id.as_str(), &format!("{}", p.on), &format!("{}", p.off)])
            .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(w: Vec<f64>, b: f64) -> LinearModel {
        LinearModel { w, b, c: 1.0, tol: 1e-6, iters_run: 1, converged: true }
    }

    #[test]
    fn normalizes_hyperplane() {
        let f = PerturbationFrame::from_model(&model(vec![0.0, 2.0], 0.0), &[vec![0.0, 1.0], vec![0.0, -1.0]], FrameKind::Effectiveness)
            .unwrap();
        assert_eq!(f.u, vec![0.0, 1.0]);
        assert_eq!(f.b, 0.0);
        assert_eq!((f.on_min, f.on_max), (-1.0, 1.0));
        assert!(PerturbationFrame::from_model(&model(vec![0.0, 0.0], 1.0), &[vec![1.0, 1.0]], FrameKind::CellLine).is_err());
    }

    #[test]
    fn orthogonal_decomposition() {
        let f = PerturbationFrame {
            u: vec![0.0, 1.0],
            b: 0.0,
            on_min: -1.0,
            on_max: 3.0,
            off_mean: 2.0,
            kind: FrameKind::Effectiveness,
        };
        assert_eq!(f.project(&[5.0, 3.0]).unwrap(), (3.0, 5.0));
        assert_eq!(f.project(&[0.0, 7.0]).unwrap().1, 0.0);
        assert_eq!(f.to_plot_coords(-1.0, 2.0), (-1.0, 0.0));
        assert_eq!(f.to_plot_coords(1.0, 0.0), (0.0, -2.0));
        assert!(f.project(&[1.0]).is_err());
    }

    #[test]
    fn efficacy_endpoints() {
        let n = EfficacyNormalization { cell_line: "a".into(), mean_neg: -2.0, mean_pos: 4.0 };
        assert_eq!(efficacy_score(&n, -2.0), -1.0);
        assert_eq!(efficacy_score(&n, 4.0), 1.0);
        assert_eq!(efficacy_score(&n, 1.0), 0.0);
    }

    fn rec(id: usize, group: Group, compound: &str, c: f64) -> WellRecord {
        WellRecord {
            well_id: format!("w{id}"),
            cell_line: "a".into(),
            group,
            compound: compound.into(),
            concentration_um: c,
            replicate: 1,
            image_path: format!("w{id}.img"),
        }
    }

    #[test]
    fn normalization_and_flat_curve() {
        let f = PerturbationFrame {
            u: vec![1.0],
            b: 0.0,
            on_min: -2.0,
            on_max: 4.0,
            off_mean: 0.0,
            kind: FrameKind::Effectiveness,
        };
        let recs = vec![
            rec(0, Group::NegCtrl, "", 0.0),
            rec(1, Group::PosCtrl, "", 0.0),
            rec(2, Group::Treated, "x", 1.0),
            rec(3, Group::Treated, "x", 0.1),
            rec(4, Group::Treated, "x", 1.0),
        ];
        let xs = vec![vec![-2.0], vec![4.0], vec![1.6], vec![1.6], vec![1.6]];
        let n = fit_efficacy_normalization(&f, &recs, &xs, "a").unwrap();
        assert_eq!((n.mean_neg, n.mean_pos), (-2.0, 4.0));
        let curves = dose_response(&recs, &xs, &f, std::slice::from_ref(&n)).unwrap();
        assert_eq!(curves.len(), 1);
        let c = &curves[0];
        assert_eq!(c.points.iter().map(|p| p.concentration_um).collect::<Vec<_>>(), vec![0.1, 1.0]);
        assert_eq!(c.points[1].n_replicates, 2);
        assert!(c.points.iter().all(|p| (p.mean_efficacy - 0.2).abs() < 1e-12));
        assert_eq!(c.effective_at, Some(0.1));
        assert!(fit_efficacy_normalization(&f, &recs[1..], &xs[1..], "a").is_err());
        assert!(matches!(dose_response(&recs, &xs, &f, &[]), Err(AxesError::MissingNorm(_))));
        let csv = curves_csv(&curves);
        assert!(csv.starts_with("compound,cell_line,concentration_um,mean_efficacy,n\nx,a,0.1,"));
    }
}
