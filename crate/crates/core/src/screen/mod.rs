//! Synthetic high-content screen: ground truth, rendering, manifests,
//! image blobs and channel operations.

pub mod blob;
mod channels;
mod config;
mod manifest;
mod render;

use std::path::{Path, PathBuf};

use rayon::prelude::*;

pub use channels::{channel_adapter, channel_adapter_graph, drop_channel};
pub use config::{default_profiles, ChannelRole, CompoundProfile, SyntheticScreenConfig};
pub use manifest::{
    format_concentration, load_manifest, manifest_bytes, parse_manifest, round_concentration, write_manifest, Group, WellRecord,
    HEADER,
};
pub use render::{render_well, Style, NOISE_SIGMA};

use crate::autograd::Tensor;

pub const MANIFEST_FILE: &str = "manifest.csv";

#[derive(Debug, thiserror::Error)]
pub enum ScreenError {
    #[error("invalid screen config: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("image blob: {0}")]
    Blob(String),
    #[error("manifest row {row}: {msg}")]
    Manifest { row: usize, msg: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl ScreenError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        ScreenError::Io { path: path.to_path_buf(), source }
    }
}

/// A rendered well with its ground-truth viability.
#[derive(Clone, Debug, PartialEq)]
pub struct Well {
    pub record: WellRecord,
    pub viability: f64,
    pub image: Tensor,
}

/// Cell line name for style index `s`.
pub fn cell_line_name(style: usize) -> String {
    format!("line{style}")
}

/// The well layout without images: per cell line the positive controls,
/// then the negative controls, then compounds by dose by replicate.
pub fn plan_wells(cfg: &SyntheticScreenConfig) -> Result<Vec<(WellRecord, f64, usize)>, ScreenError> {
    cfg.validate()?;
    let profiles = cfg.profiles();
    let doses: Vec<f64> = cfg.doses_um().into_iter().map(round_concentration).collect();
    let mut out = Vec::with_capacity(cfg.n_wells());
    for line in 0..cfg.n_cell_lines {
        let style = cfg.first_style + line;
        let name = cell_line_name(style);
        let mut push = |group: Group, compound: &str, c: f64, rep: usize, v: f64| {
            let well_id = format!("{name}-{:04}", out.iter().filter(|(_, _, s)| *s == style).count());
            out.push((
                WellRecord {
                    image_path: format!("images/{well_id}.img"),
                    well_id,
                    cell_line: name.clone(),
                    group,
                    compound: compound.to_string(),
                    concentration_um: c,
                    replicate: rep as u32,
                },
                v,
                style,
            ));
        };
        for (group, v) in [(Group::PosCtrl, 1.0), (Group::NegCtrl, 0.0)] {
            for rep in 1..=cfg.n_controls_per_group {
                push(group, "", 0.0, rep, v);
            }
        }
        for p in &profiles {
            for &c in &doses {
                for rep in 1..=cfg.replicates_per_dose {
                    push(Group::Treated, &p.name, c, rep, p.viability(c));
                }
            }
        }
    }
    Ok(out)
}

/// Renders every well of the screen in memory.
pub fn render_screen(cfg: &SyntheticScreenConfig) -> Result<Vec<Well>, ScreenError> {
    let plan = plan_wells(cfg)?;
    let roles = cfg.roles();
    Ok(plan
        .into_par_iter()
        .enumerate()
        .map(|(i, (record, viability, style))| Well {
            image: render_well(cfg.seed, i as u64, &roles, &Style::for_index(style), viability, cfg.image_size),
            record,
            viability,
        })
        .collect())
}

/// Writes `manifest.csv` and the image blobs below `dir`.
pub fn write_screen(dir: &Path, wells: &[Well]) -> Result<(), ScreenError> {
    std::fs::create_dir_all(dir.join("images")).map_err(|e| ScreenError::io(dir, e))?;
    wells
        .par_iter()
        .try_for_each(|w| blob::write_image(&dir.join(&w.record.image_path), &w.image))?;
    let records: Vec<WellRecord> = wells.iter().map(|w| w.record.clone()).collect();
    write_manifest(&dir.join(MANIFEST_FILE), &records)
}

/// Renders a screen to `out_dir` and returns its records.
pub fn generate_synthetic_screen(cfg: &SyntheticScreenConfig, out_dir: &Path) -> Result<Vec<WellRecord>, ScreenError> {
    let wells = render_screen(cfg)?;
    write_screen(out_dir, &wells)?;
    Ok(wells.into_iter().map(|w| w.record).collect())
}

/// Reads the images of `records`, resolving paths against `root`.
pub fn load_images(root: &Path, records: &[WellRecord]) -> Result<Vec<Tensor>, ScreenError> {
    records
        .par_iter()
        .map(|r| blob::read_image(&root.join(&r.image_path)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SyntheticScreenConfig {
        SyntheticScreenConfig {
            n_compounds: 2,
            n_doses: 2,
            replicates_per_dose: 2,
            n_controls_per_group: 3,
            image_size: 8,
            seed: 5,
            ..Default::default()
        }
    }

    #[test]
    fn counts_follow_layout() {
        let plan = plan_wells(&SyntheticScreenConfig::default()).unwrap();
        assert_eq!(plan.len(), 656);
        let no_cmp = SyntheticScreenConfig { n_compounds: 0, ..Default::default() };
        assert_eq!(plan_wells(&no_cmp).unwrap().len(), 2 * 2 * 20);
    }

    #[test]
    fn inert_compound_renders_like_negative_controls() {
        let plan = plan_wells(&small()).unwrap();
        for (r, v, _) in &plan {
            if r.compound == "cmp0" {
                assert_eq!(*v, 0.0);
            }
        }
    }

    #[test]
    fn write_load_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small();
        let recs = generate_synthetic_screen(&cfg, dir.path()).unwrap();
        assert_eq!(recs.len(), cfg.n_wells());
        let loaded = load_manifest(&dir.path().join(MANIFEST_FILE)).unwrap();
        assert_eq!(loaded, recs);
        let imgs = load_images(dir.path(), &loaded).unwrap();
        let again = render_screen(&cfg).unwrap();
        for (a, b) in imgs.iter().zip(&again) {
            assert_eq!(a, &b.image);
        }
    }
}
