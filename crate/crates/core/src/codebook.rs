//! Preamble alphabets and codeword spaces.
//!
//! A codeword assigns one symbol to every sub-frame of a virtual frame.
//! Symbol `0` is the idle preamble; `1..=m_j` index the non-idle preambles
//! usable in sub-frame `j`. Codewords are ranked in lexicographic order of
//! their symbol vectors, which is also the order used by enumeration.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default number of codewords above which enumeration is refused.
pub const DEFAULT_ENUMERATION_CAP: u64 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// One non-idle preamble in exactly one sub-frame.
    Reference,
    /// One symbol (preamble or idle) per sub-frame, all-idle excluded.
    Expanded,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Reference => "reference",
            Mode::Expanded => "expanded",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "reference" | "ref" | "r" => Ok(Mode::Reference),
            "expanded" | "exp" | "e" => Ok(Mode::Expanded),
            other => Err(Error::InvalidSpec(format!("unknown mode `{other}`"))),
        }
    }
}

/// Scheme parameters: frame length, per-sub-frame preamble budgets and mode.
///
/// Immutable once constructed. The codebook size is computed and checked
/// against `u64` overflow at construction.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawSpec", into = "RawSpec")]
pub struct CodebookSpec {
    budgets: Vec<u32>,
    mode: Mode,
    preambles: u32,
    size: u64,
}

impl CodebookSpec {
    /// Builds a spec with an explicit number of provisioned preambles.
    pub fn new(mode: Mode, budgets: Vec<u32>, preambles: u32) -> Result<Self> {
        if budgets.is_empty() {
            return Err(Error::InvalidSpec("frame length L must be at least 1".into()));
        }
        if preambles == 0 {
            return Err(Error::InvalidSpec("at least one preamble must be provisioned".into()));
        }
        if let Some(&m) = budgets.iter().find(|&&m| m > preambles) {
            return Err(Error::InvalidSpec(format!(
                "sub-frame budget {m} exceeds the {preambles} provisioned preambles"
            )));
        }
        if mode == Mode::Reference && budgets.iter().any(|&m| m != budgets[0]) {
            return Err(Error::InvalidSpec(
                "reference mode requires the same budget in every sub-frame".into(),
            ));
        }
        let size = match mode {
            Mode::Reference => budgets.iter().map(|&m| u64::from(m)).sum::<u64>(),
            Mode::Expanded => {
                let full = budgets
                    .iter()
                    .try_fold(1u64, |acc, &m| acc.checked_mul(u64::from(m) + 1))
                    .ok_or_else(|| Error::InvalidSpec("codebook size overflows u64".into()))?;
                full - 1
            }
        };
        if size == 0 {
            return Err(Error::InvalidSpec(
                "codebook is empty: at least one sub-frame needs a non-idle preamble".into(),
            ));
        }
        Ok(CodebookSpec { budgets, mode, preambles, size })
    }

    /// Expanded-mode spec; the provisioned preamble count is the largest budget.
    pub fn expanded(budgets: Vec<u32>) -> Result<Self> {
        let preambles = budgets.iter().copied().max().unwrap_or(0).max(1);
        Self::new(Mode::Expanded, budgets, preambles)
    }

    /// Reference-mode spec with `m` preambles in each of `frame_len` sub-frames.
    pub fn reference(m: u32, frame_len: usize) -> Result<Self> {
        Self::new(Mode::Reference, vec![m; frame_len], m.max(1))
    }

    /// Full expanded codebook over `m` preambles in each of `frame_len` sub-frames.
    pub fn uniform_expanded(m: u32, frame_len: usize) -> Result<Self> {
        Self::expanded(vec![m; frame_len])
    }

    pub fn frame_len(&self) -> usize {
        self.budgets.len()
    }

    pub fn budgets(&self) -> &[u32] {
        &self.budgets
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn preambles(&self) -> u32 {
        self.preambles
    }

    /// Number of available codewords (`A_r` or `A_e`).
    pub fn size(&self) -> u64 {
        self.size
    }

    /// True when every sub-frame has the same budget.
    pub fn is_uniform(&self) -> bool {
        self.budgets.iter().all(|&m| m == self.budgets[0])
    }

    /// Budgets rendered as `2;2` for CSV cells.
    pub fn budgets_label(&self) -> String {
        self.budgets.iter().map(u32::to_string).collect::<Vec<_>>().join(";")
    }

    /// Inline form accepted by [`FromStr`].
    pub fn to_inline(&self) -> String {
        format!(
            "L={},m={},mode={},M={}",
            self.frame_len(),
            self.budgets.iter().map(u32::to_string).collect::<Vec<_>>().join(","),
            self.mode,
            self.preambles
        )
    }

    /// Codeword of lexicographic rank `rank` (`0 <= rank < size`).
    pub fn codeword_at(&self, rank: u64) -> Codeword {
        assert!(rank < self.size, "codeword rank {rank} out of range");
        let l = self.frame_len();
        let mut symbols = vec![0u32; l];
        match self.mode {
            Mode::Expanded => {
                // Mixed radix, first sub-frame most significant; index 0 is all-idle.
                let mut rest = rank + 1;
                for j in (0..l).rev() {
                    let radix = u64::from(self.budgets[j]) + 1;
                    symbols[j] = (rest % radix) as u32;
                    rest /= radix;
                }
            }
            Mode::Reference => {
                // Weight-1 vectors sort with the non-idle symbol in the last sub-frame first.
                let mut rest = rank;
                for j in (0..l).rev() {
                    let m = u64::from(self.budgets[j]);
                    if rest < m {
                        symbols[j] = rest as u32 + 1;
                        break;
                    }
                    rest -= m;
                }
            }
        }
        Codeword(symbols)
    }

    /// Lexicographic rank of a codeword, or `None` if it is not in the codebook.
    pub fn rank_of(&self, codeword: &Codeword) -> Option<u64> {
        let symbols = codeword.symbols();
        if symbols.len() != self.frame_len() || symbols.iter().zip(&self.budgets).any(|(&s, &m)| s > m) {
            return None;
        }
        match self.mode {
            Mode::Expanded => {
                let index = symbols
                    .iter()
                    .zip(&self.budgets)
                    .fold(0u64, |acc, (&s, &m)| acc * (u64::from(m) + 1) + u64::from(s));
                index.checked_sub(1)
            }
            Mode::Reference => {
                if codeword.weight() != 1 {
                    return None;
                }
                let j = symbols.iter().position(|&s| s != 0)?;
                let after: u64 = self.budgets[j + 1..].iter().map(|&m| u64::from(m)).sum();
                Some(after + u64::from(symbols[j]) - 1)
            }
        }
    }

    /// Uniform random codeword rank.
    pub fn sample_rank<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        rng.gen_range(0..self.size)
    }
}

impl fmt::Display for CodebookSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_inline())
    }
}

/// Parses the inline form `L=2,m=2,2,mode=expanded[,M=4]`.
///
/// A single budget value is broadcast to all `L` sub-frames. Bare values
/// after `m=` continue the budget list.
impl FromStr for CodebookSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut frame_len: Option<usize> = None;
        let mut budgets: Vec<u32> = Vec::new();
        let mut mode = Mode::Expanded;
        let mut preambles: Option<u32> = None;
        let mut current: Option<String> = None;

        let parse_u32 = |v: &str| {
            v.trim()
                .parse::<u32>()
                .map_err(|_| Error::InvalidSpec(format!("`{v}` is not a non-negative integer")))
        };

        for token in s.split(',').map(str::trim).filter(|t| !t.is_empty()) {
            let (key, value) = match token.split_once('=') {
                Some((k, v)) => {
                    current = Some(k.trim().to_string());
                    (k.trim().to_string(), v.trim())
                }
                None => match current.as_deref() {
                    Some("m") => ("m".to_string(), token),
                    _ => {
                        return Err(Error::InvalidSpec(format!("unexpected token `{token}`")));
                    }
                },
            };
            match key.as_str() {
                "L" | "l" => {
                    frame_len = Some(parse_u32(value)? as usize);
                }
                "m" | "budgets" => budgets.push(parse_u32(value)?),
                "M" => preambles = Some(parse_u32(value)?),
                "mode" => mode = value.parse()?,
                other => return Err(Error::InvalidSpec(format!("unknown key `{other}`"))),
            }
        }

        build_from_parts(frame_len, budgets, mode, preambles)
    }
}

fn build_from_parts(
    frame_len: Option<usize>,
    budgets: Vec<u32>,
    mode: Mode,
    preambles: Option<u32>,
) -> Result<CodebookSpec> {
    if budgets.is_empty() {
        return Err(Error::InvalidSpec("missing budgets `m`".into()));
    }
    let l = frame_len.unwrap_or(budgets.len());
    let budgets = if budgets.len() == 1 && l > 1 { vec![budgets[0]; l] } else { budgets };
    if budgets.len() != l {
        return Err(Error::InvalidSpec(format!("expected {l} budgets, found {}", budgets.len())));
    }
    let preambles = preambles.unwrap_or_else(|| budgets.iter().copied().max().unwrap_or(0).max(1));
    CodebookSpec::new(mode, budgets, preambles)
}

#[derive(Serialize, Deserialize)]
struct RawSpec {
    #[serde(rename = "L", alias = "frame_len", default, skip_serializing_if = "Option::is_none")]
    frame_len: Option<usize>,
    #[serde(alias = "m")]
    budgets: Vec<u32>,
    #[serde(default = "default_mode")]
    mode: Mode,
    #[serde(rename = "M", alias = "preambles", default, skip_serializing_if = "Option::is_none")]
    preambles: Option<u32>,
}

fn default_mode() -> Mode {
    Mode::Expanded
}

impl TryFrom<RawSpec> for CodebookSpec {
    type Error = Error;

    fn try_from(raw: RawSpec) -> Result<Self> {
        build_from_parts(raw.frame_len, raw.budgets, raw.mode, raw.preambles)
    }
}

impl From<CodebookSpec> for RawSpec {
    fn from(spec: CodebookSpec) -> Self {
        RawSpec {
            frame_len: Some(spec.frame_len()),
            budgets: spec.budgets,
            mode: spec.mode,
            preambles: Some(spec.preambles),
        }
    }
}

/// Per-sub-frame preamble choices; `0` is idle.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Codeword(Vec<u32>);

impl Codeword {
    pub fn new(symbols: Vec<u32>) -> Self {
        Codeword(symbols)
    }

    pub fn symbols(&self) -> &[u32] {
        &self.0
    }

    /// Number of non-idle positions.
    pub fn weight(&self) -> usize {
        self.0.iter().filter(|&&s| s != 0).count()
    }

    /// Parses `(I,A)`-style notation: `I` is idle, letters `A..Z` are preambles 1..26,
    /// and plain integers are accepted as well.
    pub fn parse_letters(s: &str) -> Option<Self> {
        let inner = s.trim().trim_start_matches('(').trim_end_matches(')');
        inner
            .split(',')
            .map(|t| {
                let t = t.trim();
                match t {
                    "I" => Some(0),
                    _ if t.len() == 1 && t.as_bytes()[0].is_ascii_uppercase() => {
                        Some(u32::from(t.as_bytes()[0] - b'A') + 1)
                    }
                    _ => t.parse().ok(),
                }
            })
            .collect::<Option<Vec<_>>>()
            .map(Codeword)
    }
}

impl fmt::Display for Codeword {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for (i, &s) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            match s {
                0 => f.write_str("I")?,
                1..=26 => write!(f, "{}", char::from(b'A' + (s - 1) as u8))?,
                _ => write!(f, "{s}")?,
            }
        }
        f.write_str(")")
    }
}

/// `A_r = Σ m_j` or `A_e = ∏(m_j + 1) − 1`.
pub fn codebook_size(spec: &CodebookSpec) -> u64 {
    spec.size()
}

/// All codewords in lexicographic order, refusing codebooks larger than `cap`.
pub fn enumerate_codewords(spec: &CodebookSpec, cap: u64) -> Result<Vec<Codeword>> {
    let size = spec.size();
    if size > cap {
        return Err(Error::SizeExceedsCap { size, cap });
    }
    Ok((0..size).map(|rank| spec.codeword_at(rank)).collect())
}

/// Uniformly random codeword.
pub fn sample_codeword<R: Rng + ?Sized>(spec: &CodebookSpec, rng: &mut R) -> Codeword {
    spec.codeword_at(spec.sample_rank(rng))
}

/// Lower bound on expanded-mode preambles together with the strictness check.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MinPreambles {
    /// `⌈(M_r·L + 1)^(1/L) − 1⌉`.
    pub bound: u32,
    /// Whether `(bound + 1)^L − 1 > M_r·L`, i.e. the bound itself already beats the reference.
    pub beats_reference: bool,
}

/// Smallest expanded preamble count from the ceiling expression, computed in integers.
pub fn min_expanded_preambles(reference_preambles: u32, frame_len: u32) -> MinPreambles {
    assert!(reference_preambles >= 1 && frame_len >= 1);
    let target = u128::from(reference_preambles) * u128::from(frame_len) + 1;
    let pow = |base: u128| -> u128 {
        (0..frame_len).try_fold(1u128, |acc, _| acc.checked_mul(base)).unwrap_or(u128::MAX)
    };
    // Smallest y with y^L >= target; then ⌈target^(1/L)⌉ = y.
    let mut y: u128 = 1;
    while pow(y) < target {
        y += 1;
    }
    let bound = (y - 1) as u32;
    let a_e = pow(u128::from(bound) + 1) - 1;
    MinPreambles { bound, beats_reference: a_e > target - 1 }
}

/// Budget vectors `m` with `∏(m_j + 1) − 1 = target`, each `m_j <= max_preambles`,
/// in lexicographic order.
pub fn restrictions_for_cardinality(frame_len: usize, max_preambles: u32, target: u64) -> Vec<Vec<u32>> {
    fn walk(remaining: u64, slots: usize, max_factor: u64, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if slots == 0 {
            if remaining == 1 {
                out.push(prefix.clone());
            }
            return;
        }
        for factor in 1..=max_factor.min(remaining) {
            if remaining.is_multiple_of(factor) {
                prefix.push((factor - 1) as u32);
                walk(remaining / factor, slots - 1, max_factor, prefix, out);
                prefix.pop();
            }
        }
    }

    let mut out = Vec::new();
    if frame_len == 0 || target == 0 {
        return out;
    }
    let Some(product) = target.checked_add(1) else {
        return out;
    };
    walk(product, frame_len, u64::from(max_preambles) + 1, &mut Vec::new(), &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn words(list: &[&str]) -> Vec<Codeword> {
        list.iter().map(|s| Codeword::parse_letters(s).unwrap()).collect()
    }

    #[test]
    fn sizes() {
        assert_eq!(CodebookSpec::expanded(vec![2, 2]).unwrap().size(), 8);
        assert_eq!(CodebookSpec::reference(4, 2).unwrap().size(), 8);
        assert_eq!(CodebookSpec::expanded(vec![1]).unwrap().size(), 1);
        assert_eq!(CodebookSpec::expanded(vec![2, 4]).unwrap().size(), 14);
    }

    #[test]
    fn invalid_specs_are_rejected() {
        assert!(CodebookSpec::expanded(vec![]).is_err());
        assert!(CodebookSpec::expanded(vec![0, 0]).is_err());
        assert!(CodebookSpec::new(Mode::Reference, vec![2, 3], 4).is_err());
        assert!(CodebookSpec::new(Mode::Expanded, vec![5], 4).is_err());
        assert!(CodebookSpec::expanded(vec![u32::MAX; 3]).is_err());
    }

    #[test]
    fn l2m2_full_codebook() {
        let spec = CodebookSpec::expanded(vec![2, 2]).unwrap();
        let got = enumerate_codewords(&spec, DEFAULT_ENUMERATION_CAP).unwrap();
        let want = words(&["(I,A)", "(I,B)", "(A,I)", "(A,A)", "(A,B)", "(B,I)", "(B,A)", "(B,B)"]);
        assert_eq!(got, want);
    }

    #[test]
    fn small_enumerations() {
        let reference = CodebookSpec::reference(1, 2).unwrap();
        let mut got = enumerate_codewords(&reference, 10).unwrap();
        got.sort();
        assert_eq!(got, words(&["(I,A)", "(A,I)"]));

        let expanded = CodebookSpec::expanded(vec![1, 1]).unwrap();
        assert_eq!(enumerate_codewords(&expanded, 10).unwrap(), words(&["(I,A)", "(A,I)", "(A,A)"]));
    }

    #[test]
    fn enumeration_cap() {
        let spec = CodebookSpec::uniform_expanded(4, 4).unwrap();
        assert_eq!(enumerate_codewords(&spec, 100), Err(Error::SizeExceedsCap { size: 624, cap: 100 }));
    }

    #[test]
    fn rank_round_trip_and_order() {
        for spec in [CodebookSpec::expanded(vec![2, 0, 3]).unwrap(), CodebookSpec::reference(3, 3).unwrap()] {
            let all = enumerate_codewords(&spec, 1000).unwrap();
            assert!(all.windows(2).all(|w| w[0] < w[1]));
            for (rank, cw) in all.iter().enumerate() {
                assert_eq!(spec.rank_of(cw), Some(rank as u64));
                match spec.mode() {
                    Mode::Expanded => assert!(cw.weight() >= 1),
                    Mode::Reference => assert_eq!(cw.weight(), 1),
                }
            }
        }
    }

    #[test]
    fn reference_no_larger_than_expanded() {
        for l in 1..=4usize {
            for m in 1..=5u32 {
                let r = CodebookSpec::reference(m, l).unwrap().size();
                let e = CodebookSpec::uniform_expanded(m, l).unwrap().size();
                if l == 1 {
                    assert_eq!(r, e);
                } else {
                    assert!(r < e);
                }
            }
        }
    }

    #[test]
    fn sampling_is_uniform_chi_square() {
        let spec = CodebookSpec::expanded(vec![2, 2]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let draws = 1_000_000u64;
        let mut counts = [0u64; 8];
        for _ in 0..draws {
            let cw = sample_codeword(&spec, &mut rng);
            counts[spec.rank_of(&cw).unwrap() as usize] += 1;
        }
        let expected = draws as f64 / 8.0;
        let stat: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        // 0.999 quantile of chi-square with 7 degrees of freedom.
        assert!(stat < 24.322, "chi-square statistic {stat}");
    }

    #[test]
    fn reference_samples_have_weight_one() {
        let spec = CodebookSpec::reference(2, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            assert_eq!(sample_codeword(&spec, &mut rng).weight(), 1);
        }
    }

    #[test]
    fn min_preambles_examples() {
        assert_eq!(min_expanded_preambles(32, 4), MinPreambles { bound: 3, beats_reference: true });
        assert_eq!(min_expanded_preambles(1, 1).bound, 1);
        assert_eq!(min_expanded_preambles(4, 2), MinPreambles { bound: 2, beats_reference: false });
    }

    #[test]
    fn min_preambles_matches_float_expression() {
        for mr in 1..=64u32 {
            for l in 1..=6u32 {
                let float = ((f64::from(mr * l) + 1.0).powf(1.0 / f64::from(l)) - 1.0 - 1e-9).ceil();
                assert_eq!(min_expanded_preambles(mr, l).bound, float as u32, "M_r={mr} L={l}");
            }
        }
    }

    #[test]
    fn restriction_examples() {
        assert_eq!(restrictions_for_cardinality(2, 4, 9), vec![vec![1, 4], vec![4, 1]]);
        assert_eq!(restrictions_for_cardinality(2, 4, 24), vec![vec![4, 4]]);
        assert!(restrictions_for_cardinality(2, 4, 6).is_empty());
        for target in 1..=24 {
            for m in restrictions_for_cardinality(2, 4, target) {
                assert_eq!(CodebookSpec::expanded(m).unwrap().size(), target);
            }
        }
    }

    #[test]
    fn inline_spec_parsing() {
        let spec: CodebookSpec = "L=2,m=2,2,mode=expanded".parse().unwrap();
        assert_eq!(spec, CodebookSpec::expanded(vec![2, 2]).unwrap());
        let spec: CodebookSpec = "L=4,m=32,mode=reference".parse().unwrap();
        assert_eq!(spec.size(), 128);
        let spec: CodebookSpec = "L=2,m=1,4,M=4".parse().unwrap();
        assert_eq!((spec.size(), spec.preambles()), (9, 4));
        assert_eq!(spec.to_inline().parse::<CodebookSpec>().unwrap(), spec);
        assert!("L=3,m=2,2".parse::<CodebookSpec>().is_err());
        assert!("L=2,m=x".parse::<CodebookSpec>().is_err());
        assert!("L=2,m=2,mode=weird".parse::<CodebookSpec>().is_err());
    }

    #[test]
    fn json_spec() {
        let spec: CodebookSpec =
            serde_json::from_str(r#"{"L": 2, "budgets": [2, 2], "mode": "expanded"}"#).unwrap();
        assert_eq!(spec.size(), 8);
        let back: CodebookSpec = serde_json::from_str(&serde_json::to_string(&spec).unwrap()).unwrap();
        assert_eq!(back, spec);
        assert!(serde_json::from_str::<CodebookSpec>(r#"{"budgets": [0]}"#).is_err());
    }
}
