//! The classical variation operator: fixed Boltzmann sampling from the
//! lineage followed by one-shot generation.
//!
//! The generator never evaluates anything — selection uses the geomeans
//! already stored in the lineage, and the produced candidate goes back to
//! the driver for scoring. The scripted generator applies exactly one
//! rewrite per invocation; a candidate that cannot be rewritten comes back
//! flagged as a no-op so the driver can detect the fixed point.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::lineage::{geomean, Lineage, LineageEntry, VersionId};
use crate::minivm::rewrite::first_applicable;

use super::model::{ModelClient, ModelError};

/// Boltzmann sampling parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSpec {
    /// Temperature; small values approach greedy argmax selection.
    pub tau: f64,
    /// Number of inspiration versions sampled alongside the parent.
    pub k: usize,
    pub rng_seed: u64,
}

impl Default for SampleSpec {
    fn default() -> Self {
        SampleSpec {
            tau: 1.0,
            k: 2,
            rng_seed: 0,
        }
    }
}

/// Parent and inspirations drawn from the lineage.
#[derive(Debug, Clone)]
pub struct SampledParents {
    pub parent: LineageEntry,
    pub inspirations: Vec<LineageEntry>,
}

/// Selection probabilities proportional to `exp(geomean / tau)`, computed
/// with the usual max-subtraction for numerical stability. Indexed by
/// version id. Scaling every geomean by a positive constant leaves the
/// greedy (tau to zero) selection unchanged.
pub fn selection_probabilities(lineage: &Lineage, tau: f64) -> Vec<f64> {
    assert!(tau > 0.0, "temperature must be positive");
    let geomeans: Vec<f64> = lineage
        .entries()
        .iter()
        .map(|e| geomean(&e.scores).unwrap_or(0.0))
        .collect();
    let max = geomeans.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = geomeans.iter().map(|g| ((g - max) / tau).exp()).collect();
    let total: f64 = weights.iter().sum();
    weights.iter().map(|w| w / total).collect()
}

/// One weighted draw over `(version, weight)` items. Iterates newest-first
/// so that in the degenerate greedy limit, where every non-maximal weight
/// underflows to zero, ties at the maximum resolve to the most recent
/// version.
fn weighted_pick(rng: &mut ChaCha8Rng, items: &[(VersionId, f64)]) -> VersionId {
    let total: f64 = items.iter().map(|(_, w)| w).sum();
    let mut target = rng.random::<f64>() * total;
    for (version, weight) in items.iter().rev() {
        target -= weight;
        if target <= 0.0 {
            return *version;
        }
    }
    items[0].0
}

/// Draw the parent, then up to `k` distinct inspirations (excluding the
/// parent) without replacement. Fewer inspirations are returned when the
/// lineage is too small. The lineage type guarantees non-emptiness (it is
/// constructed from a seed), so sampling always succeeds.
pub fn sample_parents(lineage: &Lineage, spec: &SampleSpec) -> SampledParents {
    assert!(spec.tau > 0.0, "temperature must be positive");
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let probabilities = selection_probabilities(lineage, spec.tau);
    let mut pool: Vec<(VersionId, f64)> = lineage
        .entries()
        .iter()
        .map(|e| e.solution.version)
        .zip(probabilities)
        .collect();

    let parent_version = weighted_pick(&mut rng, &pool);
    pool.retain(|(v, _)| *v != parent_version);

    let mut inspirations = Vec::new();
    while inspirations.len() < spec.k && !pool.is_empty() {
        let picked = weighted_pick(&mut rng, &pool);
        pool.retain(|(v, _)| *v != picked);
        inspirations.push(lineage.get(picked).expect("sampled from lineage").clone());
    }

    SampledParents {
        parent: lineage.get(parent_version).expect("sampled from lineage").clone(),
        inspirations,
    }
}

/// Candidate source produced by a generator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneratedCandidate {
    pub source: String,
    /// The sampled parent this candidate derives from.
    pub parent_version: VersionId,
    /// Set when no rewrite applied and the parent came back unchanged.
    pub no_op: bool,
    pub note: String,
}

/// How candidates are generated from the sampled parents.
pub enum Generator {
    /// Apply exactly one rewrite, first applicable rule in priority order.
    Scripted,
    /// Issue a single prompt and return the reply verbatim.
    Model(ModelClient),
}

/// One-shot generation conditioned on the sampled parents. Performs no
/// evaluation in either variant.
pub fn generate_candidate(
    parent: &LineageEntry,
    inspirations: &[LineageEntry],
    generator: &Generator,
) -> Result<GeneratedCandidate, ModelError> {
    match generator {
        Generator::Scripted => {
            let program = parent
                .solution
                .source
                .parse()
                .expect("committed solutions always parse");
            Ok(match first_applicable(&program) {
                Some((rule, rewritten)) => GeneratedCandidate {
                    source: rewritten.to_string(),
                    parent_version: parent.solution.version,
                    no_op: false,
                    note: rule.id().to_string(),
                },
                None => GeneratedCandidate {
                    source: parent.solution.source.clone(),
                    parent_version: parent.solution.version,
                    no_op: true,
                    note: "no-op: no rewrite applies".to_string(),
                },
            })
        }
        Generator::Model(client) => {
            let reply = client.chat(&super::model::classical_prompt(parent, inspirations))?;
            Ok(GeneratedCandidate {
                source: reply,
                parent_version: parent.solution.version,
                no_op: false,
                note: "model generation".to_string(),
            })
        }
    }
}

/// The full classical operator: `generate(sample(lineage))`.
pub fn vary_classical(
    lineage: &Lineage,
    spec: &SampleSpec,
    generator: &Generator,
) -> Result<GeneratedCandidate, ModelError> {
    let sampled = sample_parents(lineage, spec);
    generate_candidate(&sampled.parent, &sampled.inspirations, generator)
}
