//! Markov chain over base-station observation configurations.
//!
//! A configuration `(C_1, …, C_L)` counts the preambles observed in each
//! sub-frame, idle included, so `1 <= C_j <= m_j + 1`. Adding one user moves
//! each `C_j` up by at most one, and the probability of a move depends only
//! on the current configuration. The perceived codeword count of a
//! configuration is `∏ C_j − 1`; its expectation after `N` users is `N_P`.
//!
//! Transition probabilities are stored as integer codeword counts over the
//! codebook size, so small models can be compared as exact rationals.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use num_rational::Ratio;

use crate::analytic::{expected_singles, LoadPoint};
use crate::codebook::{CodebookSpec, Mode};
use crate::error::{Error, Result};

/// Largest number of full configurations (`∏(m_j + 1)`) the builders accept by default.
pub const DEFAULT_STATE_CAP: u64 = 10_000_000;

/// Per-sub-frame observed-preamble counts, idle included.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Configuration(Vec<u32>);

impl Configuration {
    pub fn new(counts: Vec<u32>) -> Self {
        Configuration(counts)
    }

    pub fn counts(&self) -> &[u32] {
        &self.0
    }

    /// Number of codewords consistent with this observation, `∏ C_j − 1`.
    pub fn cardinality(&self) -> u64 {
        self.0.iter().map(|&c| u64::from(c)).product::<u64>() - 1
    }

    fn is_valid_for(&self, budgets: &[u32]) -> bool {
        self.0.len() == budgets.len() && self.0.iter().zip(budgets).all(|(&c, &m)| c >= 1 && c <= m + 1)
    }
}

/// Number of codewords that move the chain from `from` to `to`.
///
/// Sub-frames that stay contribute `C_j` choices (an already-observed symbol,
/// idle included); sub-frames that grow by one contribute `m_j + 1 − C_j`
/// unseen preambles. A self-transition excludes the all-idle codeword.
pub fn transition_count(from: &Configuration, to: &Configuration, spec: &CodebookSpec) -> u64 {
    let budgets = spec.budgets();
    if !from.is_valid_for(budgets) || !to.is_valid_for(budgets) {
        return 0;
    }
    let mut count = 1u64;
    for ((&c, &next), &m) in from.counts().iter().zip(to.counts()).zip(budgets) {
        count *= if next == c {
            u64::from(c)
        } else if next == c + 1 {
            u64::from(m + 1 - c)
        } else {
            return 0;
        };
    }
    if from == to {
        count - 1
    } else {
        count
    }
}

/// Indexed configurations of the full (unlumped) chain.
///
/// State ids follow lexicographic order of `(C_1, …, C_L)`; the all-ones
/// configuration, unreachable once a user has transmitted, is omitted.
#[derive(Debug, Clone)]
pub struct StateSpace {
    budgets: Vec<u32>,
    strides: Vec<u64>,
    len: usize,
}

impl StateSpace {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn configuration(&self, id: usize) -> Configuration {
        assert!(id < self.len, "state id {id} out of range");
        let mut rest = id as u64 + 1;
        let counts = self
            .budgets
            .iter()
            .zip(&self.strides)
            .map(|(_, &stride)| {
                let digit = rest / stride;
                rest %= stride;
                digit as u32 + 1
            })
            .collect();
        Configuration(counts)
    }

    pub fn index_of(&self, config: &Configuration) -> Option<usize> {
        if !config.is_valid_for(&self.budgets) {
            return None;
        }
        let mixed: u64 = config.counts().iter().zip(&self.strides).map(|(&c, &s)| u64::from(c - 1) * s).sum();
        mixed.checked_sub(1).map(|i| i as usize)
    }

    pub fn states(&self) -> impl Iterator<Item = Configuration> + '_ {
        (0..self.len).map(|id| self.configuration(id))
    }

    /// `α_i = ∏ C_j − 1` for every state.
    pub fn cardinalities(&self) -> Vec<u64> {
        self.states().map(|c| c.cardinality()).collect()
    }
}

pub fn build_state_space(spec: &CodebookSpec) -> Result<StateSpace> {
    build_state_space_with_cap(spec, DEFAULT_STATE_CAP)
}

pub fn build_state_space_with_cap(spec: &CodebookSpec, cap: u64) -> Result<StateSpace> {
    if spec.mode() != Mode::Expanded {
        return Err(Error::WrongMode { expected: "expanded" });
    }
    let budgets = spec.budgets().to_vec();
    let full = spec.size() + 1;
    if full > cap {
        return Err(Error::StateSpaceTooLarge { states: full, cap });
    }
    let mut strides = vec![1u64; budgets.len()];
    for j in (0..budgets.len().saturating_sub(1)).rev() {
        strides[j] = strides[j + 1] * (u64::from(budgets[j + 1]) + 1);
    }
    Ok(StateSpace { budgets, strides, len: (full - 1) as usize })
}

/// Sparse transition model with integer counts over a common denominator.
///
/// Rows are stored in compressed form with targets in ascending id order.
/// The same type serves both the full chain and the lumped chain, whose
/// states are sorted configuration representatives.
#[derive(Debug, Clone)]
pub struct TransitionModel {
    states: Vec<Configuration>,
    cardinalities: Vec<u64>,
    offsets: Vec<usize>,
    targets: Vec<u32>,
    counts: Vec<u64>,
    probabilities: Vec<f64>,
    initial: Vec<u64>,
    denominator: u64,
    lumped: bool,
}

impl TransitionModel {
    fn from_rows(
        states: Vec<Configuration>,
        rows: Vec<Vec<(u32, u64)>>,
        initial: Vec<u64>,
        denominator: u64,
        lumped: bool,
    ) -> Self {
        let cardinalities = states.iter().map(Configuration::cardinality).collect();
        let mut offsets = Vec::with_capacity(rows.len() + 1);
        let mut targets = Vec::new();
        let mut counts = Vec::new();
        offsets.push(0);
        for row in rows {
            for (to, count) in row {
                targets.push(to);
                counts.push(count);
            }
            offsets.push(targets.len());
        }
        let probabilities = counts.iter().map(|&c| c as f64 / denominator as f64).collect();
        TransitionModel {
            states,
            cardinalities,
            offsets,
            targets,
            counts,
            probabilities,
            initial,
            denominator,
            lumped,
        }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn is_lumped(&self) -> bool {
        self.lumped
    }

    pub fn states(&self) -> &[Configuration] {
        &self.states
    }

    pub fn cardinalities(&self) -> &[u64] {
        &self.cardinalities
    }

    /// Codebook size `A_e`, the common denominator of every probability.
    pub fn denominator(&self) -> u64 {
        self.denominator
    }

    pub fn index_of(&self, config: &Configuration) -> Option<usize> {
        self.states.binary_search(config).ok()
    }

    /// `(target id, codeword count)` pairs of row `from`, ascending by target.
    pub fn row(&self, from: usize) -> impl Iterator<Item = (usize, u64)> + '_ {
        let span = self.offsets[from]..self.offsets[from + 1];
        self.targets[span.clone()].iter().zip(&self.counts[span]).map(|(&t, &c)| (t as usize, c))
    }

    pub fn count(&self, from: usize, to: usize) -> u64 {
        self.row(from).find(|&(t, _)| t == to).map_or(0, |(_, c)| c)
    }

    pub fn probability(&self, from: usize, to: usize) -> Ratio<u64> {
        Ratio::new(self.count(from, to), self.denominator)
    }

    /// Codeword counts giving each initial state after one user.
    pub fn initial_counts(&self) -> &[u64] {
        &self.initial
    }

    pub fn initial_probability(&self, id: usize) -> Ratio<u64> {
        Ratio::new(self.initial[id], self.denominator)
    }

    /// Dense exact transition matrix; intended for small golden comparisons.
    pub fn exact_matrix(&self) -> Vec<Vec<Ratio<u64>>> {
        (0..self.len())
            .map(|i| {
                let mut row = vec![Ratio::from_integer(0); self.len()];
                for (j, c) in self.row(i) {
                    row[j] = Ratio::new(c, self.denominator);
                }
                row
            })
            .collect()
    }

    /// State distribution after the first user, `π⁽¹⁾`.
    pub fn initial_distribution(&self) -> Vec<f64> {
        self.initial.iter().map(|&c| c as f64 / self.denominator as f64).collect()
    }

    /// One vector-matrix product `next = dist · P`.
    pub fn step(&self, dist: &[f64], next: &mut [f64]) {
        next.iter_mut().for_each(|x| *x = 0.0);
        for (i, &p) in dist.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let span = self.offsets[i]..self.offsets[i + 1];
            for (&t, &q) in self.targets[span.clone()].iter().zip(&self.probabilities[span]) {
                next[t as usize] += p * q;
            }
        }
    }

    /// Incremental `N_P` sweep over `N = 1, 2, …`.
    pub fn sweep(&self) -> PerceivedSweep<'_> {
        PerceivedSweep {
            model: self,
            dist: self.initial_distribution(),
            scratch: vec![0.0; self.len()],
            users: 1,
        }
    }

    /// Expected perceived codewords `N_P` after `users` users; 0 for no users.
    pub fn perceived_count(&self, users: u64) -> f64 {
        match users {
            0 => 0.0,
            n => self.sweep().nth((n - 1) as usize).map(|(_, v)| v).unwrap_or(0.0),
        }
    }

    /// `N_P` as an exact rational, or `None` when `A^N` overflows `u128`.
    pub fn exact_perceived_count(&self, users: u64) -> Option<Ratio<u128>> {
        if users == 0 {
            return Some(Ratio::from_integer(0));
        }
        let a = u128::from(self.denominator);
        let mut weights: Vec<u128> = self.initial.iter().map(|&c| u128::from(c)).collect();
        let mut scale = a;
        for _ in 1..users {
            let mut next = vec![0u128; self.len()];
            for (i, &w) in weights.iter().enumerate() {
                if w == 0 {
                    continue;
                }
                for (j, c) in self.row(i) {
                    next[j] = next[j].checked_add(w.checked_mul(u128::from(c))?)?;
                }
            }
            weights = next;
            scale = scale.checked_mul(a)?;
        }
        let mut numerator = 0u128;
        for (w, &alpha) in weights.iter().zip(&self.cardinalities) {
            numerator = numerator.checked_add(w.checked_mul(u128::from(alpha))?)?;
        }
        Some(Ratio::new(numerator, scale))
    }

    /// CSV dump: `state_id,C_1..C_L,cardinality,initial,transitions`.
    ///
    /// Ids are 1-based; `initial` is the reduced rational `π⁽¹⁾_i`; transitions
    /// are `to_id:count` pairs separated by `;`, counts over the codebook size.
    pub fn dump_csv(&self) -> String {
        let l = self.states.first().map_or(0, |c| c.counts().len());
        let mut out = String::from("state_id");
        for j in 1..=l {
            write!(out, ",C_{j}").unwrap();
        }
        out.push_str(",cardinality,initial,transitions\n");
        for (i, config) in self.states.iter().enumerate() {
            write!(out, "{}", i + 1).unwrap();
            for c in config.counts() {
                write!(out, ",{c}").unwrap();
            }
            let init = self.initial_probability(i);
            let transitions: Vec<String> = self.row(i).map(|(j, c)| format!("{}:{}", j + 1, c)).collect();
            writeln!(
                out,
                ",{},{}/{},{}",
                self.cardinalities[i],
                init.numer(),
                init.denom(),
                transitions.join(";")
            )
            .unwrap();
        }
        out
    }
}

/// Iterator of `(N, N_P)` reusing `π⁽ᴺ⁾` between steps.
#[derive(Debug, Clone)]
pub struct PerceivedSweep<'a> {
    model: &'a TransitionModel,
    dist: Vec<f64>,
    scratch: Vec<f64>,
    users: u64,
}

impl PerceivedSweep<'_> {
    /// Distribution `π⁽ᴺ⁾` for the `N` that the next call to `next` reports.
    pub fn distribution(&self) -> &[f64] {
        &self.dist
    }
}

impl Iterator for PerceivedSweep<'_> {
    type Item = (u64, f64);

    fn next(&mut self) -> Option<(u64, f64)> {
        let value: f64 = self.dist.iter().zip(self.model.cardinalities()).map(|(&p, &a)| p * a as f64).sum();
        let item = (self.users, value);
        self.model.step(&self.dist, &mut self.scratch);
        std::mem::swap(&mut self.dist, &mut self.scratch);
        self.users += 1;
        Some(item)
    }

    fn nth(&mut self, n: usize) -> Option<(u64, f64)> {
        for _ in 0..n {
            self.model.step(&self.dist, &mut self.scratch);
            std::mem::swap(&mut self.dist, &mut self.scratch);
            self.users += 1;
        }
        self.next()
    }
}

/// Increment subsets over the positions of `counts` that can still grow.
fn for_each_move(counts: &[u32], budgets: &[u32], mut visit: impl FnMut(&[u32], u64)) {
    let growable: Vec<usize> = (0..counts.len()).filter(|&j| counts[j] <= budgets[j]).collect();
    let mut target = counts.to_vec();
    for mask in 0u64..(1u64 << growable.len()) {
        let mut count = 1u64;
        target.copy_from_slice(counts);
        let mut grown = vec![false; counts.len()];
        for (bit, &j) in growable.iter().enumerate() {
            if mask >> bit & 1 == 1 {
                grown[j] = true;
                target[j] += 1;
            }
        }
        for j in 0..counts.len() {
            count *= if grown[j] { u64::from(budgets[j] + 1 - counts[j]) } else { u64::from(counts[j]) };
        }
        if mask == 0 {
            count -= 1;
        }
        if count > 0 {
            visit(&target, count);
        }
    }
}

/// Codeword count producing `counts` from a single user: idle or one of `m_j` preambles.
fn initial_count(counts: &[u32], budgets: &[u32]) -> u64 {
    counts
        .iter()
        .zip(budgets)
        .map(|(&c, &m)| match c {
            1 => 1,
            2 => u64::from(m),
            _ => 0,
        })
        .product()
}

pub fn build_transition_model(spec: &CodebookSpec) -> Result<TransitionModel> {
    build_transition_model_with_cap(spec, DEFAULT_STATE_CAP)
}

pub fn build_transition_model_with_cap(spec: &CodebookSpec, cap: u64) -> Result<TransitionModel> {
    let space = build_state_space_with_cap(spec, cap)?;
    let budgets = spec.budgets();
    let mut states = Vec::with_capacity(space.len());
    let mut rows = Vec::with_capacity(space.len());
    let mut initial = Vec::with_capacity(space.len());
    for config in space.states() {
        let mut row = Vec::new();
        for_each_move(config.counts(), budgets, |target, count| {
            let id = space.index_of(&Configuration(target.to_vec())).expect("valid target");
            row.push((id as u32, count));
        });
        row.sort_unstable();
        initial.push(initial_count(config.counts(), budgets));
        rows.push(row);
        states.push(config);
    }
    Ok(TransitionModel::from_rows(states, rows, initial, spec.size(), false))
}

/// Lumps sub-frame permutations of a uniform-budget chain into sorted classes.
///
/// Class count is the number of size-`L` multisets over `1..=M+1` minus the
/// all-ones class. Perceived counts match the full chain.
pub fn build_lumped_model(spec: &CodebookSpec) -> Result<TransitionModel> {
    if spec.mode() != Mode::Expanded {
        return Err(Error::WrongMode { expected: "expanded" });
    }
    if !spec.is_uniform() {
        return Err(Error::NotUniform);
    }
    let l = spec.frame_len();
    let top = spec.budgets()[0] + 1;
    let budgets = spec.budgets();

    let mut states = Vec::new();
    let mut current = vec![1u32; l];
    // Advance to the next non-decreasing vector in lexicographic order.
    while let Some(pos) = (0..l).rev().find(|&j| current[j] < top) {
        let v = current[pos] + 1;
        current[pos..].iter_mut().for_each(|c| *c = v);
        states.push(Configuration(current.clone()));
    }
    let index: HashMap<Configuration, usize> =
        states.iter().cloned().enumerate().map(|(i, c)| (c, i)).collect();

    let mut rows = Vec::with_capacity(states.len());
    let mut initial = Vec::with_capacity(states.len());
    for config in &states {
        let mut row: BTreeMap<u32, u64> = BTreeMap::new();
        for_each_move(config.counts(), budgets, |target, count| {
            let mut sorted = target.to_vec();
            sorted.sort_unstable();
            let id = index[&Configuration(sorted)] as u32;
            *row.entry(id).or_insert(0) += count;
        });
        rows.push(row.into_iter().collect());
        initial.push(initial_count(config.counts(), budgets) * permutations(config.counts()));
    }
    Ok(TransitionModel::from_rows(states, rows, initial, spec.size(), true))
}

/// Distinct orderings of a sorted vector (multinomial coefficient).
fn permutations(sorted: &[u32]) -> u64 {
    let mut result = 1u64;
    let mut placed = 0u64;
    let mut run = 0u64;
    for (i, &c) in sorted.iter().enumerate() {
        run = if i > 0 && sorted[i - 1] == c { run + 1 } else { 1 };
        placed += 1;
        // result * placed / run keeps the running multinomial integral.
        result = result * placed / run;
    }
    result
}

/// Builds the cheapest exact model: lumped for uniform budgets, full otherwise.
pub fn model_for(spec: &CodebookSpec) -> Result<TransitionModel> {
    if spec.is_uniform() && spec.frame_len() > 1 {
        build_lumped_model(spec)
    } else {
        build_transition_model(spec)
    }
}

/// `N_P` for an expanded spec.
pub fn perceived_count(spec: &CodebookSpec, users: u64) -> Result<f64> {
    Ok(model_for(spec)?.perceived_count(users))
}

/// `S_e = N_S / N_P` given a prebuilt model for `spec`.
pub fn efficiency_from_perceived(spec: &CodebookSpec, users: u64, perceived: f64) -> Result<f64> {
    if users == 0 {
        return Err(Error::Domain("efficiency is undefined for N = 0".into()));
    }
    let singles = expected_singles(LoadPoint::new(users, spec.size())?);
    Ok(if perceived > 0.0 { singles / perceived } else { 0.0 })
}

/// Code-expanded efficiency `S_e = N_S / N_P`.
pub fn expanded_efficiency(spec: &CodebookSpec, users: u64) -> Result<f64> {
    if users == 0 {
        return Err(Error::Domain("efficiency is undefined for N = 0".into()));
    }
    let perceived = perceived_count(spec, users)?;
    efficiency_from_perceived(spec, users, perceived)
}
