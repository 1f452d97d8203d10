//! Monte Carlo contention trials and exact brute-force expectations.
//!
//! Every trial draws its randomness from a ChaCha8 stream selected by the
//! trial index under the master seed, so batches are reproducible no matter
//! how trials are scheduled across threads. Aggregation sums integer counts,
//! which makes the result independent of summation order.

use std::collections::HashMap;

use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codebook::{CodebookSpec, Codeword, Mode};
use crate::error::{Error, Result};

/// Default cap on `A^N` for brute-force enumeration.
pub const DEFAULT_BRUTE_FORCE_CAP: u128 = 10_000_000;

/// A batch of independent trials at one load.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub spec: CodebookSpec,
    #[serde(alias = "N")]
    pub users: u64,
    pub trials: u64,
    pub master_seed: u64,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.users == 0 {
            return Err(Error::InvalidScenario("N must be at least 1".into()));
        }
        if self.trials == 0 {
            return Err(Error::InvalidScenario("trials must be at least 1".into()));
        }
        Ok(())
    }
}

/// Load given as a single `N` or a list of them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum UserLoad {
    One(u64),
    Many(Vec<u64>),
}

/// Scenario input document: `{spec, N | N-list, trials, master_seed}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioDocument {
    pub spec: CodebookSpec,
    #[serde(rename = "N", alias = "users")]
    pub users: UserLoad,
    pub trials: u64,
    pub master_seed: u64,
}

impl ScenarioDocument {
    /// One validated scenario per requested load, in document order.
    pub fn scenarios(&self) -> Result<Vec<ScenarioConfig>> {
        let loads = match &self.users {
            UserLoad::One(n) => vec![*n],
            UserLoad::Many(list) => list.clone(),
        };
        if loads.is_empty() {
            return Err(Error::InvalidScenario("empty N list".into()));
        }
        loads
            .into_iter()
            .map(|users| {
                let config = ScenarioConfig {
                    spec: self.spec.clone(),
                    users,
                    trials: self.trials,
                    master_seed: self.master_seed,
                };
                config.validate().map(|_| config)
            })
            .collect()
    }
}

/// Random source for trial `trial_index` under `master_seed`.
pub fn trial_rng(master_seed: u64, trial_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(trial_index);
    rng
}

/// Contention result of one virtual frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct TrialOutcome {
    /// Codewords chosen by exactly one user.
    pub singles: u64,
    /// Codewords chosen by two or more users.
    pub collided_codewords: u64,
    /// Distinct transmitted codewords.
    pub distinct_used: u64,
    /// Codewords the base station perceives.
    pub perceived: u64,
    /// Perceived codewords nobody transmitted.
    pub phantoms: u64,
}

/// Outcome for an explicit list of codeword ranks (one per user).
pub fn outcome_for_ranks(spec: &CodebookSpec, ranks: &[u64]) -> TrialOutcome {
    let mut multiplicity: HashMap<u64, u32> = HashMap::with_capacity(ranks.len());
    for &r in ranks {
        *multiplicity.entry(r).or_insert(0) += 1;
    }
    let singles = multiplicity.values().filter(|&&k| k == 1).count() as u64;
    let distinct_used = multiplicity.len() as u64;

    let perceived = match spec.mode() {
        Mode::Reference => distinct_used,
        Mode::Expanded => {
            let mut seen: Vec<Vec<bool>> =
                spec.budgets().iter().map(|&m| vec![false; m as usize + 1]).collect();
            for &r in multiplicity.keys() {
                for (j, &s) in spec.codeword_at(r).symbols().iter().enumerate() {
                    seen[j][s as usize] = true;
                }
            }
            // Idle counts as observed in every sub-frame.
            seen.iter().map(|obs| obs[1..].iter().filter(|&&b| b).count() as u64 + 1).product::<u64>() - 1
        }
    };

    TrialOutcome {
        singles,
        collided_codewords: distinct_used - singles,
        distinct_used,
        perceived,
        phantoms: perceived - distinct_used,
    }
}

/// Outcome for explicitly chosen codewords.
pub fn outcome_for_codewords(spec: &CodebookSpec, codewords: &[Codeword]) -> Result<TrialOutcome> {
    let ranks = codewords
        .iter()
        .map(|cw| {
            spec.rank_of(cw).ok_or_else(|| Error::Domain(format!("codeword {cw} is not in the codebook")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(outcome_for_ranks(spec, &ranks))
}

/// One trial: `users` independent uniform codeword choices.
pub fn run_trial<R: Rng + ?Sized>(spec: &CodebookSpec, users: u64, rng: &mut R) -> TrialOutcome {
    let ranks: Vec<u64> = (0..users).map(|_| spec.sample_rank(rng)).collect();
    outcome_for_ranks(spec, &ranks)
}

/// Sample mean with its standard error; the error is absent for a single trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: Option<f64>,
}

/// Exact integer moments of one outcome field.
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    sum: u128,
    sum_sq: u128,
}

impl Moments {
    fn push(&mut self, x: u64) {
        self.sum += u128::from(x);
        self.sum_sq += u128::from(x) * u128::from(x);
    }

    fn mean(&self, n: u64) -> f64 {
        self.sum as f64 / n as f64
    }

    /// Unbiased sample variance from exact integer sums.
    fn variance(&self, n: u64) -> Option<f64> {
        if n < 2 {
            return None;
        }
        let n128 = u128::from(n);
        let centered = n128 * self.sum_sq - self.sum * self.sum;
        Some(centered as f64 / (n as f64 * (n - 1) as f64))
    }

    fn estimate(&self, n: u64) -> Estimate {
        Estimate { mean: self.mean(n), std_error: self.variance(n).map(|v| (v / n as f64).sqrt()) }
    }
}

/// Batch statistics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateStats {
    pub trials: u64,
    pub singles: Estimate,
    pub collided_codewords: Estimate,
    pub distinct_used: Estimate,
    pub perceived: Estimate,
    pub phantoms: Estimate,
    /// `mean(singles) / mean(perceived)` with a delta-method standard error.
    pub efficiency: Estimate,
    /// Mean of per-trial `singles / perceived`.
    pub efficiency_mean_of_ratios: Estimate,
}

impl AggregateStats {
    /// Aggregates outcomes in the given order.
    pub fn from_outcomes(outcomes: &[TrialOutcome]) -> Self {
        let n = outcomes.len() as u64;
        assert!(n > 0, "at least one outcome is required");
        let mut singles = Moments::default();
        let mut collided = Moments::default();
        let mut distinct = Moments::default();
        let mut perceived = Moments::default();
        let mut phantoms = Moments::default();
        let mut cross: u128 = 0;
        let mut ratio_sum = 0.0f64;
        let mut ratio_sq = 0.0f64;
        for o in outcomes {
            singles.push(o.singles);
            collided.push(o.collided_codewords);
            distinct.push(o.distinct_used);
            perceived.push(o.perceived);
            phantoms.push(o.phantoms);
            cross += u128::from(o.singles) * u128::from(o.perceived);
            let r = if o.perceived > 0 { o.singles as f64 / o.perceived as f64 } else { 0.0 };
            ratio_sum += r;
            ratio_sq += r * r;
        }

        let mean_y = singles.mean(n);
        let mean_x = perceived.mean(n);
        let ratio = if mean_x > 0.0 { mean_y / mean_x } else { 0.0 };
        let ratio_se = match (singles.variance(n), perceived.variance(n)) {
            (Some(var_y), Some(var_x)) if mean_x > 0.0 => {
                let n128 = u128::from(n);
                let cov_num = (n128 * cross) as f64 - singles.sum as f64 * perceived.sum as f64;
                let cov = cov_num / (n as f64 * (n - 1) as f64);
                let var_r = (var_y - 2.0 * ratio * cov + ratio * ratio * var_x) / (mean_x * mean_x);
                Some((var_r.max(0.0) / n as f64).sqrt())
            }
            _ => None,
        };

        let mor_mean = ratio_sum / n as f64;
        let mor_se = (n >= 2).then(|| {
            let var = ((ratio_sq - ratio_sum * mor_mean) / (n - 1) as f64).max(0.0);
            (var / n as f64).sqrt()
        });

        AggregateStats {
            trials: n,
            singles: singles.estimate(n),
            collided_codewords: collided.estimate(n),
            distinct_used: distinct.estimate(n),
            perceived: perceived.estimate(n),
            phantoms: phantoms.estimate(n),
            efficiency: Estimate { mean: ratio, std_error: ratio_se },
            efficiency_mean_of_ratios: Estimate { mean: mor_mean, std_error: mor_se },
        }
    }
}

/// Runs all trials of a scenario in parallel; results depend only on the config.
pub fn run_batch(config: &ScenarioConfig) -> Result<AggregateStats> {
    config.validate()?;
    let outcomes: Vec<TrialOutcome> = (0..config.trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = trial_rng(config.master_seed, t);
            run_trial(&config.spec, config.users, &mut rng)
        })
        .collect();
    Ok(AggregateStats::from_outcomes(&outcomes))
}

/// Exact expectations over all `A^N` equally likely ordered codeword assignments.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExactExpectation {
    pub singles: Ratio<u128>,
    pub collided_codewords: Ratio<u128>,
    pub distinct_used: Ratio<u128>,
    pub perceived: Ratio<u128>,
    pub phantoms: Ratio<u128>,
}

/// Enumerates every ordered assignment of codewords to `users` users.
pub fn brute_force_expected(spec: &CodebookSpec, users: u64, cap: u128) -> Result<ExactExpectation> {
    let a = u128::from(spec.size());
    let outcomes = (0..users).try_fold(1u128, |acc, _| acc.checked_mul(a)).unwrap_or(u128::MAX);
    if outcomes > cap {
        return Err(Error::EnumerationTooLarge { outcomes, cap });
    }
    let mut ranks = vec![0u64; users as usize];
    let mut totals = [0u128; 5];
    loop {
        let o = outcome_for_ranks(spec, &ranks);
        for (t, v) in
            totals.iter_mut().zip([o.singles, o.collided_codewords, o.distinct_used, o.perceived, o.phantoms])
        {
            *t += u128::from(v);
        }
        // Odometer increment over codeword ranks.
        let mut pos = ranks.len();
        loop {
            if pos == 0 {
                let r = |x: u128| Ratio::new(x, outcomes);
                return Ok(ExactExpectation {
                    singles: r(totals[0]),
                    collided_codewords: r(totals[1]),
                    distinct_used: r(totals[2]),
                    perceived: r(totals[3]),
                    phantoms: r(totals[4]),
                });
            }
            pos -= 1;
            ranks[pos] += 1;
            if u128::from(ranks[pos]) < a {
                break;
            }
            ranks[pos] = 0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(budgets: &[u32]) -> CodebookSpec {
        CodebookSpec::expanded(budgets.to_vec()).unwrap()
    }

    fn words(list: &[&str]) -> Vec<Codeword> {
        list.iter().map(|s| Codeword::parse_letters(s).unwrap()).collect()
    }

    #[test]
    fn lone_user() {
        let s = spec(&[2, 3, 1]);
        let mut rng = trial_rng(3, 0);
        for _ in 0..100 {
            let o = run_trial(&s, 1, &mut rng);
            assert_eq!((o.singles, o.collided_codewords), (1, 0));
            assert_eq!(o.phantoms, o.perceived - 1);
        }
    }

    #[test]
    fn phantom_example() {
        let s = spec(&[2, 2]);
        let o = outcome_for_codewords(&s, &words(&["(A,B)", "(B,I)", "(I,A)"])).unwrap();
        assert_eq!(
            o,
            TrialOutcome { singles: 3, collided_codewords: 0, distinct_used: 3, perceived: 8, phantoms: 5 }
        );
    }

    #[test]
    fn reference_collision() {
        let s = CodebookSpec::reference(2, 2).unwrap();
        let o = outcome_for_codewords(&s, &words(&["(A,I)", "(A,I)"])).unwrap();
        assert_eq!(
            o,
            TrialOutcome { singles: 0, collided_codewords: 1, distinct_used: 1, perceived: 1, phantoms: 0 }
        );
        assert!(outcome_for_codewords(&s, &words(&["(A,A)"])).is_err());
    }

    #[test]
    fn reference_trials_have_no_phantoms() {
        let s = CodebookSpec::reference(3, 4).unwrap();
        let mut rng = trial_rng(11, 0);
        for n in 1..30 {
            let o = run_trial(&s, n, &mut rng);
            assert_eq!(o.phantoms, 0);
            assert_eq!(o.distinct_used, o.singles + o.collided_codewords);
        }
    }

    #[test]
    fn single_trial_batch() {
        let config = ScenarioConfig { spec: spec(&[2, 2]), users: 3, trials: 1, master_seed: 5 };
        let stats = run_batch(&config).unwrap();
        let o = run_trial(&config.spec, 3, &mut trial_rng(5, 0));
        assert_eq!(stats.singles.mean, o.singles as f64);
        assert_eq!(stats.perceived.mean, o.perceived as f64);
        assert_eq!(stats.perceived.std_error, None);
        assert_eq!(stats.efficiency.std_error, None);
    }

    #[test]
    fn invalid_scenarios() {
        let mut config = ScenarioConfig { spec: spec(&[2, 2]), users: 3, trials: 0, master_seed: 5 };
        assert!(run_batch(&config).is_err());
        config.trials = 1;
        config.users = 0;
        assert!(run_batch(&config).is_err());
    }

    #[test]
    fn batch_is_deterministic() {
        let config = ScenarioConfig { spec: spec(&[2, 2]), users: 10, trials: 2000, master_seed: 99 };
        let a = run_batch(&config).unwrap();
        let b = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| run_batch(&config).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn streams_differ() {
        let x: u64 = trial_rng(1, 0).gen();
        let y: u64 = trial_rng(1, 1).gen();
        let z: u64 = trial_rng(2, 0).gen();
        assert!(x != y && x != z);
    }

    #[test]
    fn standard_error_shrinks_with_trials() {
        let base = ScenarioConfig { spec: spec(&[2, 2]), users: 5, trials: 2_000, master_seed: 1 };
        let small = run_batch(&base).unwrap().perceived.std_error.unwrap();
        let large =
            run_batch(&ScenarioConfig { trials: 32_000, ..base }).unwrap().perceived.std_error.unwrap();
        let ratio = small / large;
        assert!((ratio - 4.0).abs() < 0.6, "se ratio {ratio}");
    }

    #[test]
    fn brute_force_small_cases() {
        let e = brute_force_expected(&spec(&[1, 1]), 2, DEFAULT_BRUTE_FORCE_CAP).unwrap();
        assert_eq!(e.perceived, Ratio::new(23, 9));
        assert_eq!(e.singles, Ratio::new(4, 3));
        let e = brute_force_expected(&spec(&[2, 2]), 1, DEFAULT_BRUTE_FORCE_CAP).unwrap();
        assert_eq!(e.perceived, Ratio::from_integer(2));
        assert_eq!(e.singles, Ratio::from_integer(1));
        let r = CodebookSpec::reference(3, 2).unwrap();
        assert_eq!(brute_force_expected(&r, 1, 100).unwrap().singles, Ratio::from_integer(1));
    }

    #[test]
    fn brute_force_cap() {
        assert_eq!(
            brute_force_expected(&spec(&[4, 4]), 6, 1000).unwrap_err(),
            Error::EnumerationTooLarge { outcomes: 24u128.pow(6), cap: 1000 }
        );
    }

    #[test]
    fn scenario_json() {
        let config: ScenarioConfig = serde_json::from_str(
            r#"{"spec": {"L": 2, "budgets": [2, 2], "mode": "expanded"}, "users": 4, "trials": 10, "master_seed": 1}"#,
        )
        .unwrap();
        assert_eq!(config.spec.size(), 8);

        let doc: ScenarioDocument = serde_json::from_str(
            r#"{"spec": {"L": 2, "m": [1, 1]}, "N": [1, 2], "trials": 5, "master_seed": 3}"#,
        )
        .unwrap();
        let scenarios = doc.scenarios().unwrap();
        assert_eq!(scenarios.iter().map(|s| s.users).collect::<Vec<_>>(), vec![1, 2]);
        let doc: ScenarioDocument =
            serde_json::from_str(r#"{"spec": {"m": [2]}, "N": 3, "trials": 0, "master_seed": 3}"#).unwrap();
        assert!(doc.scenarios().is_err());
    }
}
