use alloc::vec::Vec;

use rand::RngCore;

use crate::{boloop::Generator, tasks::TaskKind, vae::standard_normal};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct ProbeConfig {
    /// Similarity threshold `α`.
    pub alpha: f64,
    /// Decoder samples per probability estimate.
    pub samples: usize,
    /// Candidates tried per step before carrying the previous value forward.
    pub candidate_cap: usize,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self { alpha: 0.8, samples: 100, candidate_cap: 200 }
    }
}

/// Fraction of `samples` decodes of `z` whose similarity to `x*` exceeds `alpha`.
pub fn recovery_probability<G: Generator + ?Sized>(
    generator: &G,
    z: &[f64],
    task: TaskKind,
    target: &[u8],
    alpha: f64,
    samples: usize,
    rng: &mut dyn RngCore,
) -> f64 {
    if samples == 0 {
        return 0.0;
    }
    let hits = generator.generate_many(z, samples, rng).iter().filter(|x| task.similarity(x, target) > alpha).count();
    hits as f64 / samples as f64
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RecoveryStep {
    pub epoch: usize,
    pub probability: f64,
    pub z: Vec<f64>,
    /// The cap ran out and the previous point was carried forward.
    pub flagged: bool,
    pub candidates_tried: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RecoveryTrace {
    pub alpha: f64,
    pub samples: usize,
    pub steps: Vec<RecoveryStep>,
}

impl RecoveryTrace {
    pub fn probabilities(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.probability).collect()
    }

    pub fn is_non_decreasing(&self) -> bool {
        self.steps.windows(2).all(|w| w[1].probability >= w[0].probability)
    }

    pub fn last(&self) -> Option<f64> {
        self.steps.last().map(|s| s.probability)
    }
}

/// Tracks the near-optimum generation probability `p̃(ℓ)` across
/// retrainings. Only candidates that strictly improve on the current value
/// are accepted, so the trace never decreases.
#[derive(Debug, Clone)]
pub struct DomainRecoveryProbe {
    pub cfg: ProbeConfig,
    pub task: TaskKind,
    target: Vec<u8>,
    trace: RecoveryTrace,
}

impl DomainRecoveryProbe {
    pub fn new(task: TaskKind, cfg: ProbeConfig) -> Self {
        Self { cfg, task, target: task.optimum(), trace: RecoveryTrace { alpha: cfg.alpha, samples: cfg.samples, steps: Vec::new() } }
    }

    /// Records one step given the current generator and the encoder
    /// posterior `(mean, std)` of `x*`. The first step scores the mean; later
    /// steps draw one posterior sample per candidate.
    pub fn step<G: Generator + ?Sized>(
        &mut self,
        epoch: usize,
        generator: &G,
        mean: &[f64],
        std: &[f64],
        rng: &mut dyn RngCore,
    ) -> &RecoveryStep {
        let cfg = self.cfg;
        let score = |z: &[f64], rng: &mut dyn RngCore| {
            recovery_probability(generator, z, self.task, &self.target, cfg.alpha, cfg.samples, rng)
        };
        let step = match self.trace.steps.last() {
            None => RecoveryStep { epoch, probability: score(mean, rng), z: mean.to_vec(), flagged: false, candidates_tried: 1 },
            // Nothing can beat a certain recovery.
            Some(prev) if prev.probability >= 1.0 => {
                RecoveryStep { epoch, probability: prev.probability, z: prev.z.clone(), flagged: false, candidates_tried: 0 }
            }
            Some(prev) => {
                let mut accepted = None;
                let mut tried = 0;
                while tried < cfg.candidate_cap {
                    tried += 1;
                    let eps = standard_normal(1, mean.len(), rng);
                    let z: Vec<f64> = mean.iter().zip(std).zip(eps.data()).map(|((m, s), e)| m + s * e).collect();
                    let p = score(&z, rng);
                    if p > prev.probability {
                        accepted = Some((z, p));
                        break;
                    }
                }
                match accepted {
                    Some((z, p)) => RecoveryStep { epoch, probability: p, z, flagged: false, candidates_tried: tried },
                    None => RecoveryStep { epoch, probability: prev.probability, z: prev.z.clone(), flagged: true, candidates_tried: tried },
                }
            }
        };
        self.trace.steps.push(step);
        self.trace.steps.last().expect("just pushed")
    }

    pub fn trace(&self) -> &RecoveryTrace {
        &self.trace
    }

    pub fn into_trace(self) -> RecoveryTrace {
        self.trace
    }
}
