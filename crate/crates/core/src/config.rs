//! Run configuration: a TOML document layered over a named preset.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{BoxDomain, DirichletSegment, Side};
use crate::model::ModelParams;
use crate::presets;
use crate::solver::MeshSettings;

/// Environment variable overriding the output directory.
pub const OUT_DIR_ENV: &str = "VEFEM_OUT_DIR";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentConfig {
    pub side: Side,
    /// Start of the segment along the side; defaults to the corner.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub from: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub to: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeshConfig {
    pub domain: DomainConfig,
    pub n_coarse: usize,
    /// Target diameter near the interface; 0 disables refinement.
    pub h_fine: f64,
    pub remesh_interval: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub indicator_threshold: Option<f64>,
    pub dirichlet: Vec<SegmentConfig>,
}

impl Default for MeshConfig {
    fn default() -> Self {
        Self {
            domain: DomainConfig { min: [-5.0, -5.0], max: [5.0, 5.0] },
            n_coarse: 32,
            h_fine: presets::H_FINE_PAPER,
            remesh_interval: 10,
            indicator_threshold: None,
            dirichlet: vec![SegmentConfig { side: Side::Left, from: None, to: None }],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Write a VTK snapshot every this many steps (0: first and last only).
    pub stride: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("out"), stride: 100 }
    }
}

/// Complete description of one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub preset: String,
    pub seed: u64,
    /// Worker threads (0: use all cores).
    pub threads: usize,
    pub model: ModelParams,
    pub mesh: MeshConfig,
    pub output: OutputConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            preset: "custom".into(),
            seed: 0,
            threads: 0,
            model: ModelParams::default(),
            mesh: MeshConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

impl RunConfig {
    /// Check every value, reporting the full key path of the first bad one.
    pub fn validate(&self) -> Result<()> {
        self.model.validate().map_err(|e| match e {
            Error::Config { key, msg } => Error::Config { key: format!("model.{key}"), msg },
            other => other,
        })?;
        self.model.num_steps().map_err(|_| Error::config("model.t_end", "t_end / dt must be an integer"))?;
        let m = &self.mesh;
        BoxDomain::new(m.domain.min, m.domain.max).map_err(|e| Error::config("mesh.domain", e.to_string()))?;
        if m.n_coarse == 0 {
            return Err(Error::config("mesh.n_coarse", "must be at least 1"));
        }
        if !(m.h_fine >= 0.0 && m.h_fine.is_finite()) {
            return Err(Error::config("mesh.h_fine", format!("must be non-negative, got {}", m.h_fine)));
        }
        if let Some(t) = m.indicator_threshold {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::config("mesh.indicator_threshold", format!("must be positive, got {t}")));
            }
        }
        Ok(())
    }

    pub fn mesh_settings(&self) -> Result<MeshSettings> {
        let m = &self.mesh;
        let domain =
            BoxDomain::new(m.domain.min, m.domain.max).map_err(|e| Error::config("mesh.domain", e.to_string()))?;
        let dirichlet = m
            .dirichlet
            .iter()
            .map(|s| {
                let whole = DirichletSegment::whole(s.side, &domain);
                DirichletSegment { side: s.side, from: s.from.unwrap_or(whole.from), to: s.to.unwrap_or(whole.to) }
            })
            .collect();
        Ok(MeshSettings {
            domain,
            n_coarse: m.n_coarse,
            dirichlet,
            h_fine: (m.h_fine > 0.0).then_some(m.h_fine),
            remesh_interval: m.remesh_interval,
            indicator_threshold: m.indicator_threshold,
        })
    }

    /// Output directory after applying the environment override.
    pub fn resolved_out_dir(&self) -> PathBuf {
        match std::env::var_os(OUT_DIR_ENV) {
            Some(d) if !d.is_empty() => PathBuf::from(d),
            _ => self.output.dir.clone(),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Parse `text` on top of `preset` (or the top-level `preset` key of the
/// document, or plain defaults).
pub fn parse_config(text: &str, preset: Option<&str>) -> Result<RunConfig> {
    let over: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::config("<document>", e.message()))?;
    let name = match (preset, over.get("preset")) {
        (Some(p), _) => Some(p.to_string()),
        (None, Some(toml::Value::String(s))) => Some(s.clone()),
        (None, Some(_)) => return Err(Error::config("preset", "must be a string")),
        (None, None) => None,
    };
    let base = match &name {
        Some(n) => presets::preset(n)?,
        None => RunConfig::default(),
    };
    let mut table: toml::Table = toml::Table::try_from(&base).expect("config serializes");
    merge(&mut table, over);
    if let Some(n) = name {
        table.insert("preset".into(), toml::Value::String(n));
    }
    let cfg: RunConfig = table.try_into().map_err(|e: toml::de::Error| config_error(&e))?;
    cfg.validate()?;
    Ok(cfg)
}

fn config_error(e: &toml::de::Error) -> Error {
    let msg = e.message().to_string();
    let key = msg.split('`').nth(1).map(str::to_string).unwrap_or_else(|| "<document>".into());
    Error::config(key, msg)
}

pub fn load_config(path: &Path, preset: Option<&str>) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text, preset)
}
