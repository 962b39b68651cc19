//! Built-in experiment configurations, shipped as TOML text.

use super::ExperimentConfig;
use crate::error::{Error, Result};

const PRESETS: &[(&str, &str)] = &[
    ("smoke", include_str!("../../presets/smoke.toml")),
    ("oracle_equivalence", include_str!("../../presets/oracle_equivalence.toml")),
    ("red_black", include_str!("../../presets/red_black.toml")),
    ("gmres_scaling_laplace", include_str!("../../presets/gmres_scaling_laplace.toml")),
    ("gmres_scaling_vc", include_str!("../../presets/gmres_scaling_vc.toml")),
    ("normality_sweep", include_str!("../../presets/normality_sweep.toml")),
    ("spectrum_gallery", include_str!("../../presets/spectrum_gallery.toml")),
    ("t_spectrum_growth", include_str!("../../presets/t_spectrum_growth.toml")),
    ("rank_study_2d", include_str!("../../presets/rank_study_2d.toml")),
    ("rank_study_3d_reduced", include_str!("../../presets/rank_study_3d_reduced.toml")),
    ("hbs_error_vs_rank", include_str!("../../presets/hbs_error_vs_rank.toml")),
    ("cube_helmholtz", include_str!("../../presets/cube_helmholtz.toml")),
    ("waveguide_selfconv", include_str!("../../presets/waveguide_selfconv.toml")),
];

pub fn preset_names() -> Vec<&'static str> {
    PRESETS.iter().map(|(n, _)| *n).collect()
}

pub fn preset_text(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

/// Parses the named preset with `section.key=value` overrides applied.
pub fn preset(name: &str, overrides: &[String]) -> Result<ExperimentConfig> {
    let text = preset_text(name).ok_or_else(|| {
        Error::invalid(format!("unknown preset `{name}`; available: {}", preset_names().join(", ")))
    })?;
    ExperimentConfig::parse_with(text, overrides)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_parses() {
        for name in preset_names() {
            let cfg = preset(name, &[]).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert_eq!(cfg.name, name);
        }
    }
}
