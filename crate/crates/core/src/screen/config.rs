use serde::{Deserialize, Serialize};

use super::ScreenError;

/// What a channel of the rendered image shows.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelRole {
    Nucleus,
    Er,
    Actin,
    Nucleoli,
    Membrane,
    Mito,
    /// Never drawn on; holds only background and noise.
    Blank,
}

impl ChannelRole {
    pub const DEFAULT: [ChannelRole; 5] = [
        ChannelRole::Nucleus,
        ChannelRole::Er,
        ChannelRole::Actin,
        ChannelRole::Nucleoli,
        ChannelRole::Membrane,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ChannelRole::Nucleus => "nucleus",
            ChannelRole::Er => "er",
            ChannelRole::Actin => "actin",
            ChannelRole::Nucleoli => "nucleoli",
            ChannelRole::Membrane => "membrane",
            ChannelRole::Mito => "mito",
            ChannelRole::Blank => "blank",
        }
    }
}

/// Ground-truth response of one compound.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompoundProfile {
    pub name: String,
    pub ec50_um: f64,
    /// Viability reached at saturating dose, in `[0, 1]`.
    pub max_effect: f64,
    pub inert: bool,
    /// Above this concentration viability falls linearly, reaching zero at
    /// twice the value.
    #[serde(default)]
    pub toxic_above_um: Option<f64>,
}

impl CompoundProfile {
    pub const HILL: f64 = 2.0;

    /// Viability at concentration `c` (micromolar).
    pub fn viability(&self, c: f64) -> f64 {
        if self.inert || c <= 0.0 {
            return 0.0;
        }
        let ch = c.powf(Self::HILL);
        let mut v = self.max_effect * ch / (ch + self.ec50_um.powf(Self::HILL));
        if let Some(t) = self.toxic_above_um {
            if c > t {
                v *= (1.0 - (c - t) / t).max(0.0);
            }
        }
        v
    }
}

/// Default panel: compound 0 is inert, the rest have EC50s spread over the
/// middle of the dose range.
pub fn default_profiles(n: usize) -> Vec<CompoundProfile> {
    (0..n)
        .map(|i| {
            if i == 0 {
                return CompoundProfile {
                    name: "cmp0".into(),
                    ec50_um: 1.0,
                    max_effect: 0.0,
                    inert: true,
                    toxic_above_um: None,
                };
            }
            let frac = if n > 2 { (i - 1) as f64 / (n - 2) as f64 } else { 0.5 };
            CompoundProfile {
                name: format!("cmp{i}"),
                ec50_um: 3f64.powf(frac),
                max_effect: 1.0,
                inert: false,
                toxic_above_um: None,
            }
        })
        .collect()
}

/// Layout and ground truth of a synthetic screen.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticScreenConfig {
    pub n_cell_lines: usize,
    /// Style index of the first cell line. Lines use consecutive styles, so a
    /// screen starting past another screen's lines shows unseen cell types.
    pub first_style: usize,
    pub n_compounds: usize,
    pub n_doses: usize,
    pub first_dose_um: f64,
    pub replicates_per_dose: usize,
    pub n_controls_per_group: usize,
    pub image_size: usize,
    pub channels: usize,
    /// Role per channel; when empty the first `channels` of
    /// nucleus, ER, actin, nucleoli, membrane are used.
    pub channel_roles: Vec<ChannelRole>,
    pub seed: u64,
    /// One per compound; when empty a default panel is generated.
    pub compound_profiles: Vec<CompoundProfile>,
}

impl Default for SyntheticScreenConfig {
    fn default() -> Self {
        Self {
            n_cell_lines: 2,
            first_style: 0,
            n_compounds: 8,
            n_doses: 6,
            first_dose_um: 0.1,
            replicates_per_dose: 6,
            n_controls_per_group: 20,
            image_size: 16,
            channels: 5,
            channel_roles: Vec::new(),
            seed: 0,
            compound_profiles: Vec::new(),
        }
    }
}

impl SyntheticScreenConfig {
    /// Half-log dose series: consecutive doses differ by a factor of `sqrt(10)`.
    pub fn doses_um(&self) -> Vec<f64> {
        (0..self.n_doses)
            .map(|i| self.first_dose_um * 10f64.powf(i as f64 / 2.0))
            .collect()
    }

    pub fn roles(&self) -> Vec<ChannelRole> {
        if self.channel_roles.is_empty() {
            ChannelRole::DEFAULT.iter().copied().take(self.channels).collect()
        } else {
            self.channel_roles.clone()
        }
    }

    pub fn profiles(&self) -> Vec<CompoundProfile> {
        if self.compound_profiles.is_empty() {
            default_profiles(self.n_compounds)
        } else {
            self.compound_profiles.clone()
        }
    }

    pub fn validate(&self) -> Result<(), ScreenError> {
        let bad = |m: String| Err(ScreenError::Config(m));
        if self.n_cell_lines == 0 {
            return bad("n_cell_lines must be positive".into());
        }
        if self.image_size < 8 || !self.image_size.is_power_of_two() {
            return bad(format!("image_size must be a power of two >= 8, got {}", self.image_size));
        }
        if self.channels == 0 {
            return bad("channels must be positive".into());
        }
        if self.channel_roles.is_empty() && self.channels > ChannelRole::DEFAULT.len() {
            return bad(format!(
                "{} channels need explicit channel_roles (at most {} defaults)",
                self.channels,
                ChannelRole::DEFAULT.len()
            ));
        }
        if !self.channel_roles.is_empty() && self.channel_roles.len() != self.channels {
            return bad(format!(
                "channel_roles lists {} roles for {} channels",
                self.channel_roles.len(),
                self.channels
            ));
        }
        if self.n_compounds > 0 {
            if self.n_doses == 0 || self.replicates_per_dose == 0 {
                return bad("treated compounds need n_doses and replicates_per_dose > 0".into());
            }
            if !(self.first_dose_um > 0.0 && self.first_dose_um.is_finite()) {
                return bad(format!("first_dose_um must be positive, got {}", self.first_dose_um));
            }
        }
        if !self.compound_profiles.is_empty() && self.compound_profiles.len() != self.n_compounds {
            return bad(format!(
                "{} compound_profiles for n_compounds = {}",
                self.compound_profiles.len(),
                self.n_compounds
            ));
        }
        let mut names = std::collections::BTreeSet::new();
        for p in self.profiles() {
            if p.name.is_empty() || p.name.contains(',') || !names.insert(p.name.clone()) {
                return bad(format!("compound name {:?} is empty, has a comma or repeats", p.name));
            }
            if !(0.0..=1.0).contains(&p.max_effect) {
                return bad(format!("{}: max_effect must lie in [0, 1]", p.name));
            }
            if p.inert && p.max_effect != 0.0 {
                return bad(format!("{}: inert compounds must have max_effect 0", p.name));
            }
            if !(p.ec50_um > 0.0 && p.ec50_um.is_finite()) {
                return bad(format!("{}: ec50_um must be positive", p.name));
            }
            if p.toxic_above_um.is_some_and(|t| !(t > 0.0 && t.is_finite())) {
                return bad(format!("{}: toxic_above_um must be positive", p.name));
            }
        }
        Ok(())
    }

    /// Number of wells the screen contains.
    pub fn n_wells(&self) -> usize {
        self.n_cell_lines
            * (2 * self.n_controls_per_group + self.n_compounds * self.n_doses * self.replicates_per_dose)
    }
}
