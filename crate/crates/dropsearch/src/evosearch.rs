//! Evolutionary search over dropout configurations: scalarised aim,
//! generation loop (populate, evaluate, select, crossover & mutate), and
//! Pareto-front extraction over everything evaluated.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::EvalMetrics;
use crate::rng::{self, tag};
use crate::supernet::{sample_uniform, GenomeConfig, SupernetSpec};

/// Weights of the four aim terms. Accuracy and aPE enter positively, ECE and
/// latency negatively.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AimWeights {
    pub eta: f64,
    pub mu: f64,
    pub beta: f64,
    pub lambda: f64,
}

impl AimWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.eta, self.mu, self.beta, self.lambda];
        if all.iter().any(|w| *w < 0.0 || !w.is_finite()) {
            return Err(Error::InvalidParam {
                name: "aim_weights",
                message: format!("weights must be non-negative and finite, got {self:?}"),
            });
        }
        if all.iter().all(|&w| w == 0.0) {
            return Err(Error::InvalidParam {
                name: "aim_weights",
                message: "at least one weight must be positive".into(),
            });
        }
        Ok(())
    }
}

/// aim = eta * accuracy - mu * ECE + beta * aPE - lambda * latency
pub fn aim_score(m: &EvalMetrics, w: &AimWeights) -> f64 {
    w.eta * m.accuracy_pct - w.mu * m.ece_pct + w.beta * m.ape_nats - w.lambda * m.latency_ms
}

/// One evaluated genome.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CandidateRecord {
    pub genome: GenomeConfig,
    pub metrics: EvalMetrics,
    pub aim: f64,
}

/// Evolutionary loop parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EaParams {
    pub population_size: usize,
    pub generations: usize,
    pub parent_count: usize,
    pub mutation_prob: f64,
    pub mutation_fraction: f64,
    pub seed: u64,
}

impl Default for EaParams {
    fn default() -> Self {
        EaParams {
            population_size: 16,
            generations: 10,
            parent_count: 8,
            mutation_prob: 0.2,
            mutation_fraction: 0.5,
            seed: 0,
        }
    }
}

impl EaParams {
    pub fn validate(&self) -> Result<()> {
        if self.population_size == 0 {
            return Err(Error::InvalidParam {
                name: "population_size",
                message: "must be positive".into(),
            });
        }
        if self.parent_count == 0 || self.parent_count > self.population_size {
            return Err(Error::InvalidParam {
                name: "parent_count",
                message: format!(
                    "must lie in [1, population_size={}], got {}",
                    self.population_size, self.parent_count
                ),
            });
        }
        if self.generations == 0 {
            return Err(Error::InvalidParam {
                name: "generations",
                message: "must be at least 1".into(),
            });
        }
        for (name, v) in [
            ("mutation_prob", self.mutation_prob),
            ("mutation_fraction", self.mutation_fraction),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidParam {
                    name: "ea_params",
                    message: format!("{name} must lie in [0, 1], got {v}"),
                });
            }
        }
        Ok(())
    }
}

/// Maps a genome to its metrics. Implementations must be deterministic per
/// genome within a run; the search loop caches results by genome.
pub trait Evaluator {
    fn evaluate(&mut self, genome: &GenomeConfig) -> Result<EvalMetrics>;
}

impl<F> Evaluator for F
where
    F: FnMut(&GenomeConfig) -> Result<EvalMetrics>,
{
    fn evaluate(&mut self, genome: &GenomeConfig) -> Result<EvalMetrics> {
        self(genome)
    }
}

/// `population_size` pairwise-distinct genomes by rejection sampling.
pub fn init_population(
    spec: &SupernetSpec,
    population_size: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<GenomeConfig>> {
    if population_size as u128 > spec.space_size() {
        return Err(Error::InvalidParam {
            name: "population_size",
            message: format!(
                "{population_size} distinct genomes requested from a space of {}",
                spec.space_size()
            ),
        });
    }
    let mut seen = BTreeSet::new();
    let mut population = Vec::with_capacity(population_size);
    while population.len() < population_size {
        let genome = sample_uniform(spec, rng);
        if seen.insert(genome.choices.clone()) {
            population.push(genome);
        }
    }
    Ok(population)
}

/// The `parent_count` records with the highest aim; ties break toward the
/// lexicographically smaller genome.
pub fn select_parents(records: &[CandidateRecord], parent_count: usize) -> Vec<CandidateRecord> {
    let mut sorted: Vec<CandidateRecord> = records.to_vec();
    sorted.sort_by(|a, b| {
        b.aim
            .total_cmp(&a.aim)
            .then_with(|| a.genome.choices.cmp(&b.genome.choices))
    });
    sorted.truncate(parent_count);
    sorted
}

/// Uniform per-slot swap: each child slot takes parent a's or b's choice with
/// probability one half.
pub fn crossover(
    a: &GenomeConfig,
    b: &GenomeConfig,
    rng: &mut ChaCha8Rng,
) -> Result<GenomeConfig> {
    if a.choices.len() != b.choices.len() {
        return Err(Error::InvalidParam {
            name: "crossover",
            message: format!(
                "genome lengths differ: {} vs {}",
                a.choices.len(),
                b.choices.len()
            ),
        });
    }
    let choices = a
        .choices
        .iter()
        .zip(b.choices.iter())
        .map(|(&x, &y)| if rng.gen::<f64>() < 0.5 { x } else { y })
        .collect();
    Ok(GenomeConfig::new(choices))
}

/// Each slot independently resampled uniformly over its options with
/// probability `mutation_prob`, unchanged otherwise.
pub fn mutate(
    genome: &GenomeConfig,
    spec: &SupernetSpec,
    mutation_prob: f64,
    rng: &mut ChaCha8Rng,
) -> Result<GenomeConfig> {
    if !(0.0..=1.0).contains(&mutation_prob) {
        return Err(Error::InvalidParam {
            name: "mutation_prob",
            message: format!("must lie in [0, 1], got {mutation_prob}"),
        });
    }
    spec.check_genome(genome)?;
    let choices = genome
        .choices
        .iter()
        .zip(spec.slots.iter())
        .map(|(&c, slot)| {
            if rng.gen::<f64>() < mutation_prob {
                rng.gen_range(0..slot.option_count())
            } else {
                c
            }
        })
        .collect();
    Ok(GenomeConfig::new(choices))
}

/// Everything the search produces: the best record ever evaluated, the full
/// evaluation history (one entry per distinct genome, in evaluation order),
/// and the Pareto front over that history.
#[derive(Debug)]
pub struct SearchOutcome {
    pub best: CandidateRecord,
    pub history: Vec<CandidateRecord>,
    pub pareto: Vec<CandidateRecord>,
}

/// How many times one offspring slot re-rolls before accepting a duplicate.
const OFFSPRING_RETRIES: usize = 24;

/// Runs the generational loop. Parents survive into the next population
/// (elitism), offspring split between mutation (parents cycled) and
/// crossover of random parent pairs; each offspring slot re-rolls a bounded
/// number of times until it yields a configuration not seen before, so
/// breeding keeps generating new candidates. Deterministic in `ea.seed`.
pub fn search(
    spec: &SupernetSpec,
    evaluator: &mut dyn Evaluator,
    weights: &AimWeights,
    ea: &EaParams,
) -> Result<SearchOutcome> {
    weights.validate()?;
    ea.validate()?;
    let mut rng = rng::stream(ea.seed, tag::SEARCH, 0);
    let mut cache: BTreeMap<Vec<usize>, EvalMetrics> = BTreeMap::new();
    let mut history: Vec<CandidateRecord> = Vec::new();
    let mut population = init_population(spec, ea.population_size, &mut rng)?;

    for _generation in 0..ea.generations {
        let mut records = Vec::with_capacity(population.len());
        for genome in &population {
            spec.check_genome(genome)?;
            let metrics = match cache.get(&genome.choices) {
                Some(m) => *m,
                None => {
                    let m = evaluator.evaluate(genome).map_err(|e| Error::Evaluation {
                        genome: genome.key(),
                        message: e.to_string(),
                    })?;
                    cache.insert(genome.choices.clone(), m);
                    history.push(CandidateRecord {
                        genome: genome.clone(),
                        metrics: m,
                        aim: aim_score(&m, weights),
                    });
                    m
                }
            };
            records.push(CandidateRecord {
                genome: genome.clone(),
                metrics,
                aim: aim_score(&metrics, weights),
            });
        }

        let parents = select_parents(&records, ea.parent_count);
        let offspring_count = ea.population_size - ea.parent_count;
        let mutation_count = ((ea.mutation_fraction * offspring_count as f64).round() as usize)
            .min(offspring_count);

        let mut next: Vec<GenomeConfig> = parents.iter().map(|p| p.genome.clone()).collect();
        for j in 0..offspring_count {
            let mut child = GenomeConfig::new(Vec::new());
            for _attempt in 0..=OFFSPRING_RETRIES {
                child = if j < mutation_count {
                    mutate(&parents[j % parents.len()].genome, spec, ea.mutation_prob, &mut rng)?
                } else {
                    let i = rng.gen_range(0..parents.len());
                    let k = rng.gen_range(0..parents.len());
                    crossover(&parents[i].genome, &parents[k].genome, &mut rng)?
                };
                let seen = cache.contains_key(&child.choices)
                    || next.iter().any(|g| g.choices == child.choices);
                if !seen {
                    break;
                }
            }
            next.push(child);
        }
        population = next;
    }

    let best = history
        .iter()
        .max_by(|a, b| {
            a.aim
                .total_cmp(&b.aim)
                .then_with(|| b.genome.choices.cmp(&a.genome.choices))
        })
        .cloned()
        .ok_or(Error::EmptyInput("search history"))?;
    let pareto = pareto_front(&history)?;
    Ok(SearchOutcome { best, history, pareto })
}

/// True when `a` is at least as good as `b` on all four metrics and strictly
/// better on at least one (accuracy up, ECE down, aPE up, latency down).
pub fn dominates(a: &EvalMetrics, b: &EvalMetrics) -> bool {
    let ge = a.accuracy_pct >= b.accuracy_pct
        && a.ece_pct <= b.ece_pct
        && a.ape_nats >= b.ape_nats
        && a.latency_ms <= b.latency_ms;
    let strict = a.accuracy_pct > b.accuracy_pct
        || a.ece_pct < b.ece_pct
        || a.ape_nats > b.ape_nats
        || a.latency_ms < b.latency_ms;
    ge && strict
}

/// Non-dominated subset of `records` under the four-metric ordering.
pub fn pareto_front(records: &[CandidateRecord]) -> Result<Vec<CandidateRecord>> {
    if records.is_empty() {
        return Err(Error::EmptyInput("candidate records"));
    }
    let front = records
        .iter()
        .filter(|r| !records.iter().any(|other| dominates(&other.metrics, &r.metrics)))
        .cloned()
        .collect();
    Ok(front)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dropout::{DropoutKind, DropoutParams};
    use crate::nn::{LayerSpec, NetworkSpec};

    fn metrics(acc: f64, ece: f64, ape: f64, lat: f64) -> EvalMetrics {
        EvalMetrics { accuracy_pct: acc, ece_pct: ece, ape_nats: ape, latency_ms: lat }
    }

    fn spec_with_slots(counts: &[usize]) -> SupernetSpec {
        let mut layers = vec![LayerSpec::Linear { out_features: 8 }];
        for i in 0..counts.len() {
            layers.push(LayerSpec::DropoutSlot { slot_index: i });
        }
        layers.push(LayerSpec::Linear { out_features: 2 });
        let backbone = NetworkSpec::new(vec![4], layers).unwrap();
        let kinds = [
            DropoutKind::Bernoulli,
            DropoutKind::RandomChannel,
            DropoutKind::Block,
            DropoutKind::Masksembles,
        ];
        let slots = counts
            .iter()
            .enumerate()
            .map(|(i, &m)| {
                let choices = (0..m)
                    .map(|j| {
                        let mut p = DropoutParams::new(0.25).with_seed(i as u64);
                        p.block_size = 1;
                        (kinds[j % 4], p)
                    })
                    .collect();
                (i, choices)
            })
            .collect();
        SupernetSpec::new(backbone, slots).unwrap()
    }

    /// Frozen separable scoring: aim depends only on the genome's digits.
    fn injected_metrics(genome: &GenomeConfig) -> EvalMetrics {
        let table: [[f64; 4]; 3] = [
            [3.0, 7.0, 1.0, 5.0],
            [2.0, 4.0, 8.0, 6.0],
            [9.0, 1.0, 2.0, 3.0],
        ];
        let score: f64 = genome
            .choices
            .iter()
            .enumerate()
            .map(|(i, &c)| table[i % 3][c % 4])
            .sum();
        metrics(score, 0.0, 0.0, 0.0)
    }

    #[test]
    fn aim_is_the_weighted_signed_sum() {
        let m = metrics(91.456, 3.2, 0.7, 12.0);
        let acc_only = AimWeights { eta: 1.0, mu: 0.0, beta: 0.0, lambda: 0.0 };
        assert_eq!(aim_score(&m, &acc_only), 91.456);

        let m = metrics(91.0, 5.0, 0.8, 15.0);
        let w = AimWeights { eta: 1.0, mu: 1.0, beta: 1.0, lambda: 0.1 };
        assert!((aim_score(&m, &w) - 85.3).abs() < 1e-12);
    }

    #[test]
    fn latency_only_weights_order_by_ascending_latency() {
        let w = AimWeights { eta: 0.0, mu: 0.0, beta: 0.0, lambda: 1.0 };
        let records: Vec<EvalMetrics> =
            [14.0, 3.0, 77.0, 8.5].iter().map(|&l| metrics(0.0, 0.0, 0.0, l)).collect();
        let mut by_aim: Vec<usize> = (0..records.len()).collect();
        by_aim.sort_by(|&a, &b| aim_score(&records[b], &w).total_cmp(&aim_score(&records[a], &w)));
        assert_eq!(by_aim, vec![1, 3, 0, 2]);
    }

    #[test]
    fn weights_must_be_non_negative_and_not_all_zero() {
        assert!(AimWeights { eta: 0.0, mu: 0.0, beta: 0.0, lambda: 0.0 }.validate().is_err());
        assert!(AimWeights { eta: -1.0, mu: 0.0, beta: 0.0, lambda: 1.0 }.validate().is_err());
        assert!(AimWeights { eta: 1.0, mu: 1.0, beta: 1.0, lambda: 0.1 }.validate().is_ok());
    }

    #[test]
    fn init_population_is_distinct_and_deterministic() {
        let spec = spec_with_slots(&[4, 4, 4]);
        let mut rng = rng::stream(3, tag::SEARCH, 0);
        let pop = init_population(&spec, 16, &mut rng).unwrap();
        assert_eq!(pop.len(), 16);
        let distinct: BTreeSet<_> = pop.iter().map(|g| g.choices.clone()).collect();
        assert_eq!(distinct.len(), 16);

        let mut rng2 = rng::stream(3, tag::SEARCH, 0);
        assert_eq!(pop, init_population(&spec, 16, &mut rng2).unwrap());
    }

    #[test]
    fn init_population_covers_the_space_at_full_size() {
        let spec = spec_with_slots(&[2, 2]);
        let mut rng = rng::stream(1, tag::SEARCH, 0);
        let pop = init_population(&spec, 4, &mut rng).unwrap();
        let distinct: BTreeSet<_> = pop.into_iter().map(|g| g.choices).collect();
        assert_eq!(distinct.len(), 4);
        assert!(init_population(&spec, 5, &mut rng).is_err());
    }

    #[test]
    fn parent_selection_takes_top_aims() {
        let spec = spec_with_slots(&[2]);
        let records: Vec<CandidateRecord> = [(3.0, 0usize), (1.0, 1), (2.0, 0)]
            .iter()
            .map(|&(aim, c)| CandidateRecord {
                genome: GenomeConfig::new(vec![c]),
                metrics: metrics(aim, 0.0, 0.0, 0.0),
                aim,
            })
            .collect();
        let parents = select_parents(&records, 2);
        assert_eq!(parents[0].aim, 3.0);
        assert_eq!(parents[1].aim, 2.0);
        let identity = select_parents(&records, 3);
        assert_eq!(identity.len(), 3);
        assert!(identity[0].aim >= identity[1].aim && identity[1].aim >= identity[2].aim);
        let _ = spec;
    }

    #[test]
    fn parent_ties_break_to_smaller_genome() {
        let make = |choices: Vec<usize>| CandidateRecord {
            genome: GenomeConfig::new(choices),
            metrics: metrics(5.0, 0.0, 0.0, 0.0),
            aim: 5.0,
        };
        let records = vec![make(vec![1, 0]), make(vec![0, 1])];
        let parents = select_parents(&records, 1);
        assert_eq!(parents[0].genome.choices, vec![0, 1]);
    }

    #[test]
    fn crossover_children_stay_within_parent_alleles() {
        let a = GenomeConfig::new(vec![0, 1, 2, 3]);
        let b = GenomeConfig::new(vec![3, 2, 1, 0]);
        let mut rng = rng::stream(9, 1, 1);
        for _ in 0..1000 {
            let child = crossover(&a, &b, &mut rng).unwrap();
            for (i, &c) in child.choices.iter().enumerate() {
                assert!(c == a.choices[i] || c == b.choices[i]);
            }
        }
        let same = crossover(&a, &a, &mut rng).unwrap();
        assert_eq!(same, a);
        assert!(crossover(&a, &GenomeConfig::new(vec![0]), &mut rng).is_err());
    }

    #[test]
    fn mutation_identity_cases() {
        let spec = spec_with_slots(&[4, 4]);
        let g = GenomeConfig::new(vec![2, 1]);
        let mut rng = rng::stream(2, 2, 2);
        assert_eq!(mutate(&g, &spec, 0.0, &mut rng).unwrap(), g);

        let forced = spec_with_slots(&[1, 1]);
        let g = GenomeConfig::new(vec![0, 0]);
        assert_eq!(mutate(&g, &forced, 1.0, &mut rng).unwrap(), g);
        assert!(mutate(&g, &forced, 1.5, &mut rng).is_err());
    }

    #[test]
    fn full_mutation_resamples_uniformly() {
        let spec = spec_with_slots(&[4]);
        let g = GenomeConfig::new(vec![0]);
        let mut rng = rng::stream(11, 3, 3);
        let mut counts = [0usize; 4];
        let trials = 10_000;
        for _ in 0..trials {
            let m = mutate(&g, &spec, 1.0, &mut rng).unwrap();
            counts[m.choices[0]] += 1;
        }
        for c in counts {
            let freq = c as f64 / trials as f64;
            assert!((freq - 0.25).abs() <= 0.02, "freq {freq}");
        }
    }

    #[test]
    fn single_generation_full_population_is_exhaustive_argmax() {
        let spec = spec_with_slots(&[4, 4]);
        let weights = AimWeights { eta: 1.0, mu: 0.0, beta: 0.0, lambda: 0.0 };
        let ea = EaParams {
            population_size: 16,
            generations: 1,
            parent_count: 8,
            mutation_prob: 0.2,
            mutation_fraction: 0.5,
            seed: 5,
        };
        let mut eval = |g: &GenomeConfig| Ok(injected_metrics(g));
        let outcome = search(&spec, &mut eval, &weights, &ea).unwrap();
        let brute = spec
            .enumerate_genomes()
            .into_iter()
            .map(|g| aim_score(&injected_metrics(&g), &weights))
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(outcome.best.aim, brute);
        assert_eq!(outcome.history.len(), 16);
    }

    #[test]
    fn search_finds_the_brute_force_optimum_on_injected_evaluator() {
        let spec = spec_with_slots(&[4, 4, 4]);
        let weights = AimWeights { eta: 1.0, mu: 1.0, beta: 1.0, lambda: 1.0 };
        let brute = spec
            .enumerate_genomes()
            .into_iter()
            .map(|g| aim_score(&injected_metrics(&g), &weights))
            .fold(f64::NEG_INFINITY, f64::max);
        for seed in 0..20 {
            let ea = EaParams { seed, ..EaParams::default() };
            let mut eval = |g: &GenomeConfig| Ok(injected_metrics(g));
            let outcome = search(&spec, &mut eval, &weights, &ea).unwrap();
            assert_eq!(outcome.best.aim, brute, "seed {seed}");
        }
    }

    #[test]
    fn search_is_deterministic_in_seed() {
        let spec = spec_with_slots(&[4, 4]);
        let weights = AimWeights { eta: 1.0, mu: 0.5, beta: 2.0, lambda: 0.1 };
        let ea = EaParams { population_size: 8, generations: 4, parent_count: 4, seed: 77, ..EaParams::default() };
        let run = |_: ()| {
            let mut eval = |g: &GenomeConfig| Ok(injected_metrics(g));
            search(&spec, &mut eval, &weights, &ea).unwrap()
        };
        let a = run(());
        let b = run(());
        assert_eq!(a.best, b.best);
        assert_eq!(a.history, b.history);
    }

    #[test]
    fn more_generations_never_lose_the_best() {
        let spec = spec_with_slots(&[4, 4, 4]);
        let weights = AimWeights { eta: 1.0, mu: 0.0, beta: 0.0, lambda: 0.0 };
        let mut best_prev = f64::NEG_INFINITY;
        for generations in [1usize, 3, 10] {
            let ea = EaParams { generations, seed: 4, ..EaParams::default() };
            let mut eval = |g: &GenomeConfig| Ok(injected_metrics(g));
            let outcome = search(&spec, &mut eval, &weights, &ea).unwrap();
            assert!(outcome.best.aim >= best_prev);
            best_prev = outcome.best.aim;
        }
    }

    #[test]
    fn every_evaluated_genome_is_legal() {
        let spec = spec_with_slots(&[4, 2, 3]);
        let weights = AimWeights { eta: 1.0, mu: 0.0, beta: 0.0, lambda: 0.0 };
        let ea = EaParams { population_size: 6, generations: 8, parent_count: 3, seed: 13, ..EaParams::default() };
        let mut eval = |g: &GenomeConfig| Ok(injected_metrics(g));
        let outcome = search(&spec, &mut eval, &weights, &ea).unwrap();
        for rec in &outcome.history {
            spec.check_genome(&rec.genome).unwrap();
        }
    }

    #[test]
    fn weight_scaling_preserves_the_argmax() {
        let spec = spec_with_slots(&[4, 4, 4]);
        let ea = EaParams { seed: 21, ..EaParams::default() };
        let base = AimWeights { eta: 1.0, mu: 0.3, beta: 0.6, lambda: 0.2 };
        let scaled = AimWeights { eta: 2.5, mu: 0.75, beta: 1.5, lambda: 0.5 };
        let richer = |g: &GenomeConfig| {
            let m = injected_metrics(g);
            Ok(EvalMetrics {
                accuracy_pct: m.accuracy_pct,
                ece_pct: (g.choices[0] * 2) as f64,
                ape_nats: g.choices[1] as f64 * 0.3,
                latency_ms: g.choices[2] as f64 + 1.0,
            })
        };
        let mut e1 = richer;
        let mut e2 = richer;
        let a = search(&spec, &mut e1, &base, &ea).unwrap();
        let b = search(&spec, &mut e2, &scaled, &ea).unwrap();
        assert_eq!(a.best.genome, b.best.genome);
    }

    #[test]
    fn evaluator_errors_carry_the_genome() {
        let spec = spec_with_slots(&[2]);
        let weights = AimWeights { eta: 1.0, mu: 0.0, beta: 0.0, lambda: 0.0 };
        let ea = EaParams { population_size: 2, generations: 1, parent_count: 1, seed: 0, ..EaParams::default() };
        let mut eval = |_: &GenomeConfig| -> Result<EvalMetrics> {
            Err(Error::EmptyInput("synthetic failure"))
        };
        match search(&spec, &mut eval, &weights, &ea) {
            Err(Error::Evaluation { genome, .. }) => assert!(!genome.is_empty()),
            other => panic!("expected evaluation error, got {other:?}"),
        }
    }

    #[test]
    fn pareto_front_basics() {
        let rec = |acc, ece, ape, lat| CandidateRecord {
            genome: GenomeConfig::new(vec![0]),
            metrics: metrics(acc, ece, ape, lat),
            aim: 0.0,
        };
        let single = vec![rec(90.0, 2.0, 0.5, 10.0)];
        assert_eq!(pareto_front(&single).unwrap().len(), 1);

        let dominated = vec![rec(90.0, 2.0, 0.5, 10.0), rec(80.0, 3.0, 0.4, 11.0)];
        let front = pareto_front(&dominated).unwrap();
        assert_eq!(front.len(), 1);
        assert_eq!(front[0].metrics.accuracy_pct, 90.0);

        assert!(pareto_front(&[]).is_err());
    }

    #[test]
    fn pareto_front_matches_pairwise_oracle_on_random_records() {
        let mut rng = rng::stream(31, 5, 5);
        let records: Vec<CandidateRecord> = (0..50)
            .map(|i| CandidateRecord {
                genome: GenomeConfig::new(vec![i]),
                metrics: metrics(
                    (rng.gen::<f64>() * 20.0).round() + 80.0,
                    (rng.gen::<f64>() * 8.0).round(),
                    (rng.gen::<f64>() * 10.0).round() / 10.0,
                    (rng.gen::<f64>() * 20.0).round() + 5.0,
                ),
                aim: 0.0,
            })
            .collect();
        let front = pareto_front(&records).unwrap();
        // oracle: explicit double loop marking dominated entries
        let mut dominated = vec![false; records.len()];
        for i in 0..records.len() {
            for j in 0..records.len() {
                if i != j && dominates(&records[j].metrics, &records[i].metrics) {
                    dominated[i] = true;
                }
            }
        }
        let expect: Vec<&CandidateRecord> =
            records.iter().zip(&dominated).filter(|(_, &d)| !d).map(|(r, _)| r).collect();
        assert_eq!(front.len(), expect.len());
        for (a, b) in front.iter().zip(expect.iter()) {
            assert_eq!(a.genome, b.genome);
        }
        // soundness: no member dominates another
        for a in &front {
            for b in &front {
                assert!(!dominates(&a.metrics, &b.metrics) || a.genome == b.genome);
            }
        }
    }

}