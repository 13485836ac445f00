//! One replay run from a [`RunConfig`] to its report files.

use std::path::Path;

use actuate_core::{ContextSchema, Decider, Registry};
use serde::Serialize;

use crate::config::{Baseline, RunConfig};
use crate::contexts::Specificity;
use crate::harness::{replay, EpisodeRecord, NearestDevice, ReplayOptions, Resolver};
use crate::latency::pad_trace;
use crate::metrics::{write_csv, LatencySummary, MetricsReport};
use crate::persist::{write_atomic, ModelStore};
use crate::scenario::{generate, ScenarioConfig};
use crate::sensor_map::SensorMap;
use crate::trace::{inject_swap, Trace};
use crate::{Error, Result};

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(Error::io(path))?;
    serde_json::from_str(&text).map_err(Error::json(path.display().to_string()))
}

/// Rewrites every request to reveal `specificity` of its ground truth.
pub fn respecify(trace: &mut Trace, specificity: Specificity, registry: &Registry) -> Result<()> {
    for r in &mut trace.records {
        let class = registry
            .device(&r.truth.device)
            .and_then(|d| d.classes.first())
            .map(|c| c.0.clone())
            .ok_or_else(|| Error::Config(format!("device `{}` has no class", r.truth.device)))?;
        r.request = specificity.request(&class, r.truth.action.as_str()).into();
    }
    trace.header.specificity = specificity;
    Ok(())
}

/// The trace a config describes, with swap, specificity and padding
/// applied, and the registry to replay it against.
pub fn prepare(cfg: &RunConfig) -> Result<(Trace, Registry)> {
    let mut trace = if cfg.synthetic {
        let mut scenario: ScenarioConfig = match &cfg.scenario {
            Some(p) => read_json(p)?,
            None => ScenarioConfig::default(),
        };
        if let Some(days) = cfg.days {
            scenario.days = days;
        }
        if let Some(mode) = cfg.location_mode {
            scenario.location_mode = mode;
        }
        generate(&scenario, cfg.seed)?
    } else {
        let path = cfg.trace.as_ref().ok_or_else(|| Error::Config("no trace given".into()))?;
        Trace::load(path)?
    };

    let sensor_map = cfg.sensor_map.as_deref().map(SensorMap::load).transpose()?;
    let registry = match (&cfg.registry, &trace.header.registry, &sensor_map) {
        (Some(p), _, _) => read_json(p)?,
        (None, Some(r), _) => r.clone(),
        (None, None, Some(m)) => m.registry(),
        _ => return Err(Error::Config("no registry: give --registry or a trace that carries one".into())),
    };
    registry.hierarchy()?;
    if let Some(p) = &cfg.schema {
        let schema: ContextSchema = read_json(p)?;
        if schema != trace.header.schema {
            return Err(Error::Config(format!("{} does not match the trace schema", p.display())));
        }
    }
    if let Some(m) = &sensor_map {
        if trace.header.label_coords.is_empty() {
            trace.header.label_coords = m
                .sensors
                .iter()
                .filter_map(|(id, s)| s.coords.map(|c| (m.label(id), c.to_vec())))
                .collect();
        }
    }
    trace.check_registry(&registry)?;
    if let Some(s) = cfg.specificity {
        respecify(&mut trace, s, &registry)?;
    }
    if let Some(s) = &cfg.swap {
        inject_swap(&mut trace, &s.a, &s.b, s.at)?;
    }
    if let Some(n) = cfg.pad_to {
        trace = pad_trace(&trace, n, cfg.seed)?;
    }
    Ok((trace, registry))
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary<'a> {
    pub config: &'a RunConfig,
    pub seed: u64,
    pub source: Option<&'a str>,
    pub resolver: &'static str,
    pub metrics: &'a MetricsReport,
}

#[derive(Debug)]
pub struct RunOutput {
    pub episodes: Vec<EpisodeRecord>,
    pub metrics: MetricsReport,
    pub latency: LatencySummary,
    pub models: Option<ModelStore>,
    /// Deterministic for a fixed trace, config and seed.
    pub summary_json: String,
}

impl RunOutput {
    pub fn csv(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        write_csv(&mut buf, &self.episodes)?;
        Ok(buf)
    }

    /// `report.csv`, `summary.json`, `latency.json` and, for the learner,
    /// `models.json`. Nothing is written unless all of them serialize.
    pub fn write(&self, dir: &Path) -> Result<()> {
        let csv = self.csv()?;
        let latency = serde_json::to_string_pretty(&self.latency).map_err(Error::json("latency"))? + "\n";
        let models = self.models.as_ref().map(ModelStore::to_json);
        write_atomic(&dir.join("report.csv"), &csv)?;
        write_atomic(&dir.join("summary.json"), self.summary_json.as_bytes())?;
        write_atomic(&dir.join("latency.json"), latency.as_bytes())?;
        if let Some(m) = models {
            write_atomic(&dir.join("models.json"), m.as_bytes())?;
        }
        Ok(())
    }
}

pub fn build_decider(cfg: &RunConfig, registry: &Registry, schema: &ContextSchema) -> Result<Decider> {
    let mut decider = Decider::new(registry.clone(), schema, &cfg.hyperparameters)?;
    for c in &cfg.controllers {
        decider.attach_controller(Box::new(c.build()))?;
    }
    Ok(decider)
}

pub fn execute(cfg: &RunConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let (trace, registry) = prepare(cfg)?;
    let options = ReplayOptions { max_proposals: cfg.max_proposals };
    let (episodes, models, resolver) = match cfg.baseline {
        Some(Baseline::Nearest) => {
            let at = trace.header.schema.index_of("location").unwrap_or(1);
            let mut b: Box<dyn Resolver> =
                Box::new(NearestDevice::new(&registry, at, trace.header.label_coords.clone())?);
            (replay(&trace, b.as_mut(), options)?, None, "nearest")
        }
        None => {
            let mut d = build_decider(cfg, &registry, &trace.header.schema)?;
            let episodes = replay(&trace, &mut d, options)?;
            (episodes, Some(ModelStore::new(registry, d.into_models())), "learner")
        }
    };
    let metrics = MetricsReport::from_records(&episodes, cfg.window)?;
    let latency = LatencySummary::compute(&episodes)?;
    let summary = Summary {
        config: cfg,
        seed: cfg.seed,
        source: trace.header.source.as_deref(),
        resolver,
        metrics: &metrics,
    };
    let summary_json = serde_json::to_string_pretty(&summary).map_err(Error::json("summary"))? + "\n";
    Ok(RunOutput { episodes, metrics, latency, models, summary_json })
}
