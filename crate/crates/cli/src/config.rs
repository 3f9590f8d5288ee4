//! Run configuration: file format, flag overrides and conversion into the
//! core model types.
//!
//! Config files are TOML by default; JSON documents are also accepted so
//! that a `compute` result (which embeds its resolved configuration) can be
//! fed back in unchanged.

use serde::{Deserialize, Serialize};

use pke_core::optimizer::{LinkTemplate, OptimizerSettings};
use pke_core::{
    disturbance_profile, ChannelKind, ChannelParams, DisturbanceProfile, KrausSet, LinkPoint,
    ProtocolId, ProtocolSpec,
};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecoherenceCfg {
    /// "dephasing" or "depolarizing".
    pub kind: ChannelKind,
    /// Visibility per arm; for the depolarizing channel the strength is
    /// `lambda = 1 - v`.
    pub v_a: f64,
    pub v_b: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelCfg {
    pub eta_a: f64,
    pub eta_b: f64,
    pub n_a: f64,
    pub n_b: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
}

fn default_dt() -> f64 {
    1.0
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepCfg {
    /// "n-ratio" (common to both arms), "n-ratio-2d", or "p-pair".
    pub axis: String,
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    #[serde(default = "default_log")]
    pub log: bool,
    /// Required for "p-pair" sweeps: the fixed coding order.
    #[serde(default)]
    pub m: Option<u32>,
}

fn default_log() -> bool {
    true
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateCfg {
    pub frames: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_blocks")]
    pub blocks: u32,
    #[serde(default = "default_pair_model")]
    pub pair_model: pke_core::PairModel,
}

fn default_blocks() -> u32 {
    8
}

fn default_pair_model() -> pke_core::PairModel {
    pke_core::PairModel::Poisson
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerCfg {
    #[serde(default)]
    pub p_lo: Option<f64>,
    #[serde(default)]
    pub p_hi: Option<f64>,
    #[serde(default)]
    pub m_cap: Option<u32>,
}

/// A full run configuration; optional fields are required only by the
/// subcommands that consume them.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub protocol: String,
    #[serde(default)]
    pub q: Option<f64>,
    #[serde(default)]
    pub sift_factor: Option<f64>,
    pub decoherence: DecoherenceCfg,
    pub channel: ChannelCfg,
    #[serde(default)]
    pub m: Option<u32>,
    #[serde(default)]
    pub p_pair: Option<f64>,
    #[serde(default)]
    pub sweep: Option<SweepCfg>,
    #[serde(default)]
    pub simulate: Option<SimulateCfg>,
    #[serde(default)]
    pub optimizer: Option<OptimizerCfg>,
}

/// Wrapper matching the JSON emitted by `compute`/`optimize`, accepted back
/// as a config document.
#[derive(Deserialize)]
struct ResultEnvelope {
    config: RunConfig,
}

impl RunConfig {
    /// Parse a config document: TOML first, JSON (bare or result envelope)
    /// as fallback.
    pub fn parse(text: &str) -> Result<Self, String> {
        let toml_err = match toml::from_str::<RunConfig>(text) {
            Ok(cfg) => return Ok(cfg),
            Err(e) => e,
        };
        if let Ok(cfg) = serde_json::from_str::<RunConfig>(text) {
            return Ok(cfg);
        }
        if let Ok(envelope) = serde_json::from_str::<ResultEnvelope>(text) {
            return Ok(envelope.config);
        }
        Err(format!("cannot parse config: {toml_err}"))
    }

    pub fn protocol_spec(&self) -> Result<ProtocolSpec, String> {
        let id = ProtocolId::from_str(&self.protocol).map_err(|e| e.to_string())?;
        let q = self.q.unwrap_or_else(|| id.default_q());
        let mut spec = ProtocolSpec::new(id, q).map_err(|e| format!("q: {e}"))?;
        if let Some(s) = self.sift_factor {
            spec = spec
                .with_sift_factor(s)
                .map_err(|e| format!("sift_factor: {e}"))?;
        }
        Ok(spec)
    }

    pub fn kraus_sets(&self) -> Result<(KrausSet, KrausSet), String> {
        let d = &self.decoherence;
        let make = |v: f64, arm: &str| -> Result<KrausSet, String> {
            let parameter = match d.kind {
                ChannelKind::Dephasing => v,
                ChannelKind::Depolarizing => 1.0 - v,
            };
            KrausSet::new(d.kind, parameter).map_err(|e| format!("decoherence.v_{arm}: {e}"))
        };
        Ok((make(d.v_a, "a")?, make(d.v_b, "b")?))
    }

    pub fn profile(&self) -> Result<DisturbanceProfile, String> {
        let (a, b) = self.kraus_sets()?;
        disturbance_profile(&a, &b).map_err(|e| e.to_string())
    }

    pub fn channel_params(&self) -> Result<ChannelParams, String> {
        let c = &self.channel;
        ChannelParams::with_dt(c.eta_a, c.eta_b, c.n_a, c.n_b, c.dt).map_err(|e| e.to_string())
    }

    pub fn template(&self) -> Result<LinkTemplate, String> {
        Ok(LinkTemplate {
            channel: self.channel_params()?,
            protocol: self.protocol_spec()?,
            decoherence: self.profile()?,
        })
    }

    /// Fully specified operating point; `compute` and `simulate` need it.
    pub fn link_point(&self) -> Result<LinkPoint, String> {
        let m = self
            .m
            .ok_or("m is required (set m or run a sweep/optimize)")?;
        let p_pair = self
            .p_pair
            .ok_or("p_pair is required (set p_pair or run a sweep/optimize)")?;
        LinkPoint::new(
            m,
            p_pair,
            self.channel_params()?,
            self.protocol_spec()?,
            self.profile()?,
        )
        .map_err(|e| e.to_string())
    }

    pub fn optimizer_settings(&self) -> Result<OptimizerSettings, String> {
        let mut settings = OptimizerSettings::default();
        if let Some(o) = &self.optimizer {
            if let Some(v) = o.p_lo {
                settings.p_lo = v;
            }
            if let Some(v) = o.p_hi {
                settings.p_hi = v;
            }
            if let Some(v) = o.m_cap {
                settings.m_cap = v;
            }
        }
        Ok(settings)
    }
}
