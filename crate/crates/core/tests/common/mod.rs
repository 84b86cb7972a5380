#![allow(dead_code)]

use ekw_core::model::ModelParameters;

pub const DESK_MODEL: &str = include_str!("../../../../configs/desk_model.toml");

/// The bundled calibration cut to `periods` decision periods.
pub fn desk(periods: u32) -> ModelParameters {
    let mut p = ModelParameters::from_toml_str(DESK_MODEL).unwrap();
    p.horizon.t_max = p.horizon.t_min + periods - 1;
    p.validate().unwrap()
}

pub fn zero_chol(p: &mut ModelParameters) {
    p.shock_chol = [[0.0; 5]; 5];
}
