//! Load-adaptive codebook selection.
//!
//! Candidate codebooks are compared on an integer load grid; the schedule
//! picks the most efficient candidate at each load and merges contiguous
//! runs into segments.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::ops::RangeInclusive;

use rayon::prelude::*;

use crate::analytic::efficiency_for_codewords;
use crate::chain::{build_state_space, efficiency_from_perceived, model_for};
use crate::codebook::{restrictions_for_cardinality, CodebookSpec, Mode};
use crate::error::{Error, Result};

/// Relative tolerance under which two efficiencies count as tied.
const TIE_TOLERANCE: f64 = 1e-12;

/// Distinct state cardinalities `∏ C_j − 1` of the full `(L, M)` chain.
pub fn state_cardinality_values(frame_len: usize, preambles: u32) -> Result<Vec<u64>> {
    let spec = CodebookSpec::uniform_expanded(preambles, frame_len)?;
    let space = build_state_space(&spec)?;
    let set: BTreeSet<u64> = space.cardinalities().into_iter().collect();
    Ok(set.into_iter().collect())
}

/// State cardinalities strictly above the reference codebook size `M·L`.
pub fn cardinalities_of_interest(frame_len: usize, preambles: u32) -> Result<Vec<u64>> {
    let reference = u64::from(preambles) * frame_len as u64;
    Ok(state_cardinality_values(frame_len, preambles)?.into_iter().filter(|&a| a > reference).collect())
}

/// Expanded spec realizing `cardinality` with the lexicographically smallest restriction.
pub fn restricted_spec(frame_len: usize, preambles: u32, cardinality: u64) -> Result<CodebookSpec> {
    let budgets = restrictions_for_cardinality(frame_len, preambles, cardinality)
        .into_iter()
        .next()
        .ok_or_else(|| {
            Error::InvalidSpec(format!(
                "no restriction of L={frame_len}, M={preambles} has {cardinality} codewords"
            ))
        })?;
    CodebookSpec::new(Mode::Expanded, budgets, preambles)
}

/// Reference spec plus one restricted expanded spec per cardinality of interest.
pub fn default_candidates(frame_len: usize, preambles: u32) -> Result<Vec<CodebookSpec>> {
    let mut out = vec![CodebookSpec::reference(preambles, frame_len)?];
    for a in cardinalities_of_interest(frame_len, preambles)? {
        out.push(restricted_spec(frame_len, preambles, a)?);
    }
    Ok(out)
}

fn check_grid(grid: &[u64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::Domain("load grid is empty".into()));
    }
    if grid[0] == 0 {
        return Err(Error::Domain("load grid values must be at least 1".into()));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Domain("load grid must be strictly increasing".into()));
    }
    Ok(())
}

/// Efficiency at every grid load; expanded specs reuse `π⁽ᴺ⁾` across the grid.
pub fn efficiency_curve(spec: &CodebookSpec, grid: &[u64]) -> Result<Vec<(u64, f64)>> {
    check_grid(grid)?;
    match spec.mode() {
        Mode::Reference => grid.iter().map(|&n| Ok((n, efficiency_for_codewords(n, spec.size())?))).collect(),
        Mode::Expanded => {
            let model = model_for(spec)?;
            let mut sweep = model.sweep();
            let mut done = 0u64;
            let mut out = Vec::with_capacity(grid.len());
            for &n in grid {
                let (_, perceived) = sweep.nth((n - done - 1) as usize).expect("sweep is unbounded");
                done = n;
                out.push((n, efficiency_from_perceived(spec, n, perceived)?));
            }
            Ok(out)
        }
    }
}

/// Smallest grid load where `b` is strictly more efficient than `a`.
pub fn crossover_point(a: &CodebookSpec, b: &CodebookSpec, grid: &[u64]) -> Result<Option<u64>> {
    let (curve_a, curve_b) = rayon::join(|| efficiency_curve(a, grid), || efficiency_curve(b, grid));
    Ok(first_crossing(&curve_a?, &curve_b?))
}

/// Smallest load where the second curve strictly exceeds the first.
pub fn first_crossing(a: &[(u64, f64)], b: &[(u64, f64)]) -> Option<u64> {
    a.iter().zip(b).find(|((_, ea), (_, eb))| eb > ea).map(|((n, _), _)| *n)
}

/// Largest grid load whose efficiency strictly exceeds `level`.
pub fn last_load_above(curve: &[(u64, f64)], level: f64) -> Option<u64> {
    curve.iter().rev().find(|(_, e)| *e > level).map(|(n, _)| *n)
}

/// Candidate codebooks evaluated on a load grid.
#[derive(Debug, Clone)]
pub struct CandidateSet {
    candidates: Vec<CodebookSpec>,
    load_grid: Vec<u64>,
}

impl CandidateSet {
    pub fn new(candidates: Vec<CodebookSpec>, load_grid: Vec<u64>) -> Result<Self> {
        if candidates.is_empty() {
            return Err(Error::Domain("candidate set is empty".into()));
        }
        check_grid(&load_grid)?;
        Ok(CandidateSet { candidates, load_grid })
    }

    pub fn candidates(&self) -> &[CodebookSpec] {
        &self.candidates
    }

    pub fn load_grid(&self) -> &[u64] {
        &self.load_grid
    }

    /// Efficiency curves of all candidates, in candidate order.
    pub fn curves(&self) -> Result<Vec<Vec<(u64, f64)>>> {
        self.candidates.par_iter().map(|spec| efficiency_curve(spec, &self.load_grid)).collect()
    }
}

/// A maximal run of grid loads served by one codebook.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub n_low: u64,
    pub n_high: u64,
    pub spec: CodebookSpec,
    pub efficiency_low: f64,
    pub efficiency_high: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdSchedule {
    pub segments: Vec<Segment>,
}

impl ThresholdSchedule {
    /// Codebook chosen for load `n`, if `n` lies in a segment.
    pub fn spec_for(&self, n: u64) -> Option<&CodebookSpec> {
        self.segments.iter().find(|s| s.n_low <= n && n <= s.n_high).map(|s| &s.spec)
    }

    /// `n_low,n_high,mode,budgets,cardinality,efficiency_low,efficiency_high`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n_low,n_high,mode,budgets,cardinality,efficiency_low,efficiency_high\n");
        for s in &self.segments {
            writeln!(
                out,
                "{},{},{},{},{},{:.6},{:.6}",
                s.n_low,
                s.n_high,
                s.spec.mode(),
                s.spec.budgets_label(),
                s.spec.size(),
                s.efficiency_low,
                s.efficiency_high
            )
            .unwrap();
        }
        out
    }
}

/// Index of the best candidate; near-ties go to the smaller codebook.
fn pick(values: &[f64], sizes: &[u64]) -> usize {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by_key(|&i| (sizes[i], i));
    let mut best = order[0];
    for &i in &order[1..] {
        let margin = TIE_TOLERANCE * values[best].abs().max(values[i].abs());
        if values[i] > values[best] + margin {
            best = i;
        }
    }
    best
}

/// Per-load argmax over the candidates, merged into contiguous segments.
pub fn threshold_schedule(set: &CandidateSet) -> Result<ThresholdSchedule> {
    let curves = set.curves()?;
    let sizes: Vec<u64> = set.candidates.iter().map(CodebookSpec::size).collect();
    let mut segments: Vec<(usize, Segment)> = Vec::new();
    for (g, &n) in set.load_grid.iter().enumerate() {
        let values: Vec<f64> = curves.iter().map(|c| c[g].1).collect();
        let best = pick(&values, &sizes);
        let e = values[best];
        match segments.last_mut() {
            Some((idx, seg)) if *idx == best => {
                seg.n_high = n;
                seg.efficiency_high = e;
            }
            _ => segments.push((
                best,
                Segment {
                    n_low: n,
                    n_high: n,
                    spec: set.candidates[best].clone(),
                    efficiency_low: e,
                    efficiency_high: e,
                },
            )),
        }
    }
    Ok(ThresholdSchedule { segments: segments.into_iter().map(|(_, s)| s).collect() })
}

/// Efficiency of the schedule's chosen codebook at every grid load.
pub fn envelope(set: &CandidateSet) -> Result<Vec<(u64, f64)>> {
    let curves = set.curves()?;
    let sizes: Vec<u64> = set.candidates.iter().map(CodebookSpec::size).collect();
    Ok(set
        .load_grid
        .iter()
        .enumerate()
        .map(|(g, &n)| {
            let values: Vec<f64> = curves.iter().map(|c| c[g].1).collect();
            (n, values[pick(&values, &sizes)])
        })
        .collect())
}

/// Contiguous 1-based preamble ranges, one per class, assigned in order.
pub fn partition_preambles(total: u32, class_budgets: &[u32]) -> Result<Vec<RangeInclusive<u32>>> {
    let requested: u64 = class_budgets.iter().map(|&b| u64::from(b)).sum();
    if requested > u64::from(total) {
        return Err(Error::BudgetExceedsTotal { requested, total: u64::from(total) });
    }
    let mut next = 1u32;
    Ok(class_budgets
        .iter()
        .map(|&b| {
            let range = next..=next + b - 1;
            next += b;
            range
        })
        .collect())
}
