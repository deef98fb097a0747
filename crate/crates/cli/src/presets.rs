//! Figure presets. The parameter values live in the JSON files under
//! `presets/`; `figure` holds the values that define each figure, `grid`
//! holds plotting ranges and sweep values chosen for reproduction.

use serde::Deserialize;

use crate::config::GridConfig;
use crate::error::{CliError, Result};

pub const FIG1: &str = include_str!("../presets/fig1.json");
pub const FIG2: &str = include_str!("../presets/fig2.json");
pub const FIG3: &str = include_str!("../presets/fig3.json");

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fig1 {
    pub figure: Fig1Figure,
    pub grid: Fig1Grid,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fig1Figure {
    pub q_plus: f64,
    pub q_minus: f64,
    pub phi_over_pi: f64,
    pub chi_bar_over_gamma: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fig1Grid {
    pub gamma: f64,
    pub times: GridConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fig2 {
    pub grid: crate::config::ScanConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fig3 {
    pub figure: Fig3Figure,
    pub grid: Fig3Grid,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fig3Figure {
    pub phi_over_pi: f64,
    pub n_for_varying_chi: usize,
    pub chi_over_gamma_for_varying_n: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fig3Grid {
    pub gamma: f64,
    pub chi_over_gamma: Vec<f64>,
    pub n: Vec<usize>,
    pub times: GridConfig,
}

pub fn parse<T: for<'de> Deserialize<'de>>(text: &str, source: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| CliError::config(source, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_presets_parse() {
        let f1: Fig1 = parse(FIG1, "fig1").unwrap();
        assert_eq!(f1.figure.chi_bar_over_gamma, vec![-0.2, -1.0]);
        let _: Fig2 = parse(FIG2, "fig2").unwrap();
        let f3: Fig3 = parse(FIG3, "fig3").unwrap();
        assert_eq!(f3.figure.n_for_varying_chi, 6);
    }
}
