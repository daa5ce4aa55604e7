//! Named experiment configurations.

use crate::config::{MeshConfig, OutputConfig, RunConfig};
use crate::error::{Error, Result};
use crate::model::ModelParams;

/// Fine cell diameter of the published two-dimensional runs: ten bisection
/// generations below the coarse diameter `sqrt(2) * 10 / 32`.
pub const H_FINE_PAPER: f64 = 0.013811;

/// Fine cell diameter of the reduced runs (four bisection generations).
pub const H_FINE_DESK: f64 = 0.1105;

pub const PRESETS: &[&str] = &[
    "example1_k0",
    "example1_kp",
    "example1_km",
    "example2_km2",
    "example2_km1",
    "example2_kp1",
    "smoke_dissipative",
    "chs_limit",
];

fn base(name: &str, model: ModelParams) -> RunConfig {
    RunConfig { preset: name.into(), model, ..RunConfig::default() }
}

fn coarse_mesh(n: usize) -> MeshConfig {
    MeshConfig { n_coarse: n, h_fine: 0.0, remesh_interval: 0, ..MeshConfig::default() }
}

/// Configuration of a named preset.
pub fn preset(name: &str) -> Result<RunConfig> {
    let d = ModelParams::default();
    let cfg = match name {
        "example1_k0" | "example1_kp" | "example1_km" => {
            let kappa_t = match name {
                "example1_kp" => 0.5,
                "example1_km" => -0.5,
                _ => 0.0,
            };
            base(name, ModelParams { kappa_t, t_end: 14.0, ..d })
        }
        "example2_km2" | "example2_km1" | "example2_kp1" => {
            let kappa_t = match name {
                "example2_km2" => -2.0,
                "example2_km1" => -1.0,
                _ => 1.0,
            };
            base(name, ModelParams { kappa_t, chi_phi: 0.0, g_stress: 4.0, t_end: 13.5, ..d })
        }
        "smoke_dissipative" => RunConfig {
            mesh: coarse_mesh(16),
            output: OutputConfig { stride: 0, ..OutputConfig::default() },
            ..base(
                name,
                ModelParams {
                    proliferation: 0.0,
                    chi_phi: 0.0,
                    kappa_t: 0.0,
                    t_end: 50.0 * d.dt,
                    tol_nonlinear: 1e-9,
                    ..d
                },
            )
        },
        "chs_limit" => RunConfig {
            mesh: coarse_mesh(16),
            output: OutputConfig { stride: 0, ..OutputConfig::default() },
            ..base(
                name,
                ModelParams {
                    tau_bar: 1e-3,
                    kappa_t: 0.0,
                    g_stress: 0.0,
                    t_end: 100.0 * d.dt,
                    stabilize_relaxation: true,
                    ..d
                },
            )
        },
        other => return Err(Error::config("preset", format!("unknown preset `{other}`; expected one of {PRESETS:?}"))),
    };
    Ok(cfg)
}

/// Reduce a preset to desk scale: coarser interface resolution and a
/// shorter horizon, model constants untouched.
pub fn desk_scale(mut cfg: RunConfig, t_end: f64) -> RunConfig {
    if cfg.mesh.h_fine > 0.0 {
        cfg.mesh.h_fine = cfg.mesh.h_fine.max(H_FINE_DESK);
    }
    cfg.model.t_end = cfg.model.t_end.min(t_end);
    cfg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_presets_validate() {
        for p in PRESETS {
            preset(p).unwrap().validate().unwrap();
        }
        assert!(preset("nope").is_err());
        let c = preset("example2_km1").unwrap();
        assert_eq!((c.model.chi_phi, c.model.g_stress, c.model.kappa_t), (0.0, 4.0, -1.0));
    }
}
