use super::{VmTrace, CLASS_NAMES, METRIC_NAMES};
use crate::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::path::Path;

const DEFAULT_CONFIG: &str = include_str!("../../configs/synth_default.toml");

/// Generative parameters of one metric for one class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricArchetype {
    pub baseline: f64,
    /// Amplitude of the periodic (daily) component.
    pub amplitude: f64,
    /// Cycle length in timesteps.
    pub period: f64,
    pub noise_std: f64,
    /// Per-step probability of a positive burst.
    pub burst_prob: f64,
}

impl MetricArchetype {
    fn lerp_towards(&self, mean: &MetricArchetype, s: f64) -> MetricArchetype {
        let f = |c: f64, m: f64| m + s * (c - m);
        MetricArchetype {
            baseline: f(self.baseline, mean.baseline),
            amplitude: f(self.amplitude, mean.amplitude),
            period: f(self.period, mean.period),
            noise_std: f(self.noise_std, mean.noise_std),
            burst_prob: f(self.burst_prob, mean.burst_prob),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassArchetype {
    pub name: String,
    pub metrics: BTreeMap<String, MetricArchetype>,
}

/// Synthetic trace generator settings. The default is read from
/// `configs/synth_default.toml`; fields missing from a config file keep
/// their default values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub vms_per_class: usize,
    /// Timesteps per VM (2016 = one week at 5-minute sampling).
    pub length: usize,
    /// 0 makes the class archetypes identical, 1 uses them unchanged.
    pub separability: f64,
    /// Multiplies noise standard deviations and burst probabilities.
    pub noise_scale: f64,
    pub burst_gain: f64,
    pub classes: Vec<ClassArchetype>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        // parsed without `serde(default)`, which would recurse into this function
        #[derive(Deserialize)]
        struct Bundled {
            vms_per_class: usize,
            length: usize,
            separability: f64,
            noise_scale: f64,
            burst_gain: f64,
            classes: Vec<ClassArchetype>,
        }
        let b: Bundled = toml::from_str(DEFAULT_CONFIG).expect("bundled synthetic config parses");
        SynthConfig {
            vms_per_class: b.vms_per_class,
            length: b.length,
            separability: b.separability,
            noise_scale: b.noise_scale,
            burst_gain: b.burst_gain,
            classes: b.classes,
        }
    }
}

impl SynthConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: SynthConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("synthetic config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("synthetic config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.vms_per_class == 0 {
            return bad("vms_per_class must be positive".into());
        }
        if self.length < 2 {
            return bad(format!("length must be at least 2, got {}", self.length));
        }
        if !(0.0..=1.0).contains(&self.separability) {
            return bad(format!("separability must be in [0, 1], got {}", self.separability));
        }
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return bad(format!("noise_scale must be non-negative, got {}", self.noise_scale));
        }
        if !(self.burst_gain >= 0.0 && self.burst_gain.is_finite()) {
            return bad(format!("burst_gain must be non-negative, got {}", self.burst_gain));
        }
        if self.classes.len() != CLASS_NAMES.len() {
            return bad(format!(
                "expected {} classes ({}), got {}",
                CLASS_NAMES.len(),
                CLASS_NAMES.join(", "),
                self.classes.len()
            ));
        }
        for (class, expected) in self.classes.iter().zip(CLASS_NAMES) {
            if class.name != expected {
                return bad(format!("class {:?} listed where {expected:?} was expected", class.name));
            }
            if let Some(extra) = class.metrics.keys().find(|k| !METRIC_NAMES.contains(&k.as_str())) {
                return bad(format!("class {}: unknown metric {extra:?}", class.name));
            }
            for name in METRIC_NAMES {
                let Some(a) = class.metrics.get(name) else {
                    return bad(format!("class {}: missing metric {name:?}", class.name));
                };
                let finite = [a.baseline, a.amplitude, a.period, a.noise_std, a.burst_prob]
                    .iter()
                    .all(|v| v.is_finite());
                if !finite
                    || a.baseline < 0.0
                    || a.amplitude < 0.0
                    || a.period <= 0.0
                    || a.noise_std < 0.0
                    || !(0.0..=1.0).contains(&a.burst_prob)
                {
                    return bad(format!("class {}: metric {name:?} has out-of-range parameters {a:?}", class.name));
                }
            }
        }
        Ok(())
    }

    /// Per-class archetypes after applying the separability knob, in
    /// canonical metric order.
    pub fn effective_archetypes(&self) -> Vec<Vec<MetricArchetype>> {
        let c = self.classes.len() as f64;
        METRIC_NAMES
            .iter()
            .map(|name| {
                let per_class: Vec<MetricArchetype> =
                    self.classes.iter().map(|cl| cl.metrics[*name]).collect();
                let mean = per_class.iter().fold(
                    MetricArchetype {
                        baseline: 0.0,
                        amplitude: 0.0,
                        period: 0.0,
                        noise_std: 0.0,
                        burst_prob: 0.0,
                    },
                    |acc, a| MetricArchetype {
                        baseline: acc.baseline + a.baseline / c,
                        amplitude: acc.amplitude + a.amplitude / c,
                        period: acc.period + a.period / c,
                        noise_std: acc.noise_std + a.noise_std / c,
                        burst_prob: acc.burst_prob + a.burst_prob / c,
                    },
                );
                per_class
                    .iter()
                    .map(|a| a.lerp_towards(&mean, self.separability))
                    .collect::<Vec<_>>()
            })
            .fold(vec![Vec::new(); self.classes.len()], |mut acc, per_class| {
                for (class, a) in per_class.into_iter().enumerate() {
                    acc[class].push(a);
                }
                acc
            })
    }

    /// Generates `vms_per_class` traces per class, class-major, with vm ids
    /// `"{class}-{index:02}"`. Each VM draws from its own stream of the
    /// seeded generator.
    pub fn synthesize(&self, seed: u64) -> Result<Vec<VmTrace>> {
        self.validate()?;
        let archetypes = self.effective_archetypes();
        let names: Vec<String> = METRIC_NAMES.iter().map(|s| s.to_string()).collect();
        let max_period = archetypes
            .iter()
            .flatten()
            .map(|a| a.period)
            .fold(0.0, f64::max);
        let jobs: Vec<(usize, usize)> = (0..self.classes.len())
            .flat_map(|c| (0..self.vms_per_class).map(move |v| (c, v)))
            .collect();
        crate::par::map_slice(&jobs, |&(class, v)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream((class * self.vms_per_class + v) as u64);
            let phase = rng.random_range(0.0..max_period);
            let m = METRIC_NAMES.len();
            let mut samples = vec![0.0; self.length * m];
            for t in 0..self.length {
                for (j, a) in archetypes[class].iter().enumerate() {
                    let cycle = (TAU * (t as f64 + phase) / a.period).sin();
                    let noise: f64 = rng.sample(StandardNormal);
                    let burst_p = (a.burst_prob * self.noise_scale).clamp(0.0, 1.0);
                    let burst = if rng.random::<f64>() < burst_p {
                        self.burst_gain * (a.amplitude + a.noise_std)
                    } else {
                        0.0
                    };
                    let value = a.baseline + a.amplitude * cycle + self.noise_scale * a.noise_std * noise + burst;
                    samples[t * m + j] = value.max(0.0);
                }
            }
            VmTrace::new(format!("{}-{v:02}", self.classes[class].name), class, names.clone(), samples)
        })
        .into_iter()
        .collect()
    }
}

/// Shorthand for [`SynthConfig::synthesize`].
pub fn synthesize(config: &SynthConfig, seed: u64) -> Result<Vec<VmTrace>> {
    config.synthesize(seed)
}
